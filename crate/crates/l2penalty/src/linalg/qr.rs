use nalgebra::{DMatrix, DVector};

use crate::error::Error;

/// QR factorization of the stacked matrix `[Aᵀ; √α·I]`.
///
/// The `R` factor coincides with the Cholesky factor of `AAᵀ + αI`, so
/// normal-equation solves reduce to two triangular solves without ever
/// forming `AAᵀ`.
#[derive(Debug, Clone)]
pub struct StackedQR {
    pub a: DMatrix<f64>,
    pub alpha: f64,
    /// Upper-triangular m×m factor.
    pub r: DMatrix<f64>,
    /// Per-column flag: diagonal of R below the drop tolerance.
    pub rank_flags: Vec<bool>,
}

impl StackedQR {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank_flags.iter().any(|&f| f)
    }
}

pub fn stacked_qr(a: &DMatrix<f64>, alpha: f64) -> Result<StackedQR, Error> {
    if a.iter().any(|v| !v.is_finite()) || !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::NonFinite);
    }
    let (m, n) = a.shape();
    let mut stacked = DMatrix::zeros(n + m, m);
    stacked.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
    let sqrt_alpha = alpha.sqrt();
    for i in 0..m {
        stacked[(n + i, i)] = sqrt_alpha;
    }
    let r_full = stacked.qr().unpack_r();
    let r = r_full.view((0, 0), (m, m)).into_owned();

    // Rank detection: zeros on the diagonal of R, read with a scaled tolerance.
    let drop_tol = a.norm() * f64::EPSILON * (m.max(n) as f64);
    let rank_flags = (0..m).map(|i| r[(i, i)].abs() <= drop_tol).collect();

    Ok(StackedQR {
        a: a.clone(),
        alpha,
        r,
        rank_flags,
    })
}

/// Solves `RᵀR q = rhs` and returns `(q, p)` with `p = R⁻ᵀ q`, so that
/// `‖p‖² = qᵀ(RᵀR)⁻¹q`.
pub fn solve_normal(qr: &StackedQR, rhs: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), Error> {
    if qr.is_rank_deficient() {
        return Err(Error::SingularFactor);
    }
    let m = qr.r.nrows();
    if rhs.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: rhs.len(),
        });
    }
    let rt = qr.r.transpose();
    let z = rt
        .solve_lower_triangular(rhs)
        .ok_or(Error::SingularFactor)?;
    let q = qr
        .r
        .solve_upper_triangular(&z)
        .ok_or(Error::SingularFactor)?;
    let p = rt.solve_lower_triangular(&q).ok_or(Error::SingularFactor)?;
    Ok((q, p))
}

/// Solves `AAᵀ x = rhs`, falling back to the `√ε`-regularized system
/// `(AAᵀ + √ε·I) x = rhs` when `A` is rank deficient, which approximates
/// the minimum-norm solution.
pub fn solve_least_norm(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, Error> {
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let qr = stacked_qr(a, 0.0)?;
    if !qr.is_rank_deficient() {
        let (q, _) = solve_normal(&qr, rhs)?;
        return Ok(q);
    }
    let reg = stacked_qr(a, f64::EPSILON.sqrt())?;
    let (mut q, _) = solve_normal(&reg, rhs)?;
    // Iterative refinement removes the bias of the diagonal shift for
    // consistent systems.
    for _ in 0..2 {
        let r = rhs - a * (a.transpose() * &q);
        let (dq, _) = solve_normal(&reg, &r)?;
        q += dq;
    }
    Ok(q)
}
