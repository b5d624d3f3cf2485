//! Closed-form evaluation of the ℓ2-composite proximal operators.
//!
//! `prox_l2_linear` minimizes `½ν⁻¹‖u − w‖² + τ‖Au + b‖₂` through the dual
//! trust-region problem: either the consistent interior solution, or a
//! safeguarded Newton iteration on the secular equation
//! `1/‖s(α)‖ = 1/(ντ)` with `s(α) = −(AAᵀ + αI)⁻¹(Aw + b)`.
//!
//! `prox_l2_quadratic` adds a curvature term `½uᵀBu` and works on the
//! equivalent saddle-point systems solved by MINRES.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::linalg::{
    krylov_symmetric_solve, solve_least_norm, solve_normal, stacked_qr, QuasiNewtonOp,
};

const MAX_NEWTON_ITERS: usize = 10_000;
const SAFEGUARD_THETA: f64 = 0.8;
const KRYLOV_MAX_ITERS: usize = 10_000;

/// Curvature part of a quadratic prox query: `Q = I + ν_B·B`.
pub struct Curvature<'a> {
    pub op: &'a QuasiNewtonOp,
    pub nu_b: f64,
}

pub struct ProxQuery<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DVector<f64>,
    pub w: &'a DVector<f64>,
    pub nu: f64,
    pub tau: f64,
    pub curvature: Option<Curvature<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// ‖y‖ < ντ with a consistent linear system; α* = 0 (or its floor).
    Interior,
    /// Dual constraint active: ‖y‖ = ντ at α* > 0.
    Boundary,
}

/// One iterate of the secular Newton iteration.
#[derive(Debug, Clone)]
pub struct SecularState {
    pub alpha: f64,
    pub s_alpha: DVector<f64>,
    pub p: DVector<f64>,
    pub phi: f64,
}

#[derive(Debug, Clone)]
pub struct ProxResult {
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub alpha_star: f64,
    pub newton_iters: usize,
    pub branch: Branch,
    /// Secular iterates, recorded for diagnostics.
    pub secular_trace: Vec<SecularState>,
}

fn secular_tol(nu_tau: f64) -> f64 {
    f64::EPSILON.powf(0.75) * nu_tau.max(1.0)
}

pub fn prox_l2_linear(q: &ProxQuery) -> Result<ProxResult, Error> {
    assert!(q.curvature.is_none());
    assert!(q.nu > 0.0 && q.tau > 0.0);
    if q.a.iter().any(|v| !v.is_finite())
        || q.b.iter().any(|v| !v.is_finite())
        || q.w.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite);
    }

    let nu_tau = q.nu * q.tau;
    let v = q.a * q.w + q.b; // Aw + b
    let qr0 = stacked_qr(q.a, 0.0)?;
    let alpha_floor = f64::EPSILON.powf(0.75);
    let tol = secular_tol(nu_tau);

    let mut trace = Vec::new();
    let (mut alpha, mut s, mut p);
    if !qr0.is_rank_deficient() {
        let (s0, p0) = solve_normal(&qr0, &(-&v))?;
        if s0.norm() <= nu_tau {
            return Ok(ProxResult {
                u: q.w + q.a.transpose() * &s0,
                y: s0,
                alpha_star: 0.0,
                newton_iters: 0,
                branch: Branch::Interior,
                secular_trace: trace,
            });
        }
        alpha = 0.0;
        s = s0;
        p = p0;
    } else {
        let s0 = -solve_least_norm(q.a, &v)?;
        let residual = (q.a * (q.a.transpose() * &s0) + &v).norm();
        let consistent = residual <= 1e-10 * (1.0 + v.norm());
        if consistent && s0.norm() <= nu_tau {
            return Ok(ProxResult {
                u: q.w + q.a.transpose() * &s0,
                y: s0,
                alpha_star: 0.0,
                newton_iters: 0,
                branch: Branch::Interior,
                secular_trace: trace,
            });
        }
        alpha = f64::EPSILON.sqrt();
        let qr = stacked_qr(q.a, alpha)?;
        let (sa, pa) = solve_normal(&qr, &(-&v))?;
        s = sa;
        p = pa;
    }

    let mut iters = 0;
    loop {
        let s_norm = s.norm();
        let phi = 1.0 / s_norm - 1.0 / nu_tau;
        trace.push(SecularState {
            alpha,
            s_alpha: s.clone(),
            p: p.clone(),
            phi,
        });
        if (s_norm - nu_tau).abs() < tol {
            return Ok(ProxResult {
                u: q.w + q.a.transpose() * &s,
                y: s,
                alpha_star: alpha,
                newton_iters: iters,
                branch: Branch::Boundary,
                secular_trace: trace,
            });
        }
        if iters >= MAX_NEWTON_ITERS {
            return Err(Error::SecularNonConvergence {
                iters,
                alpha,
                phi,
                s_norm,
            });
        }
        iters += 1;

        // Newton on φ(α) = 1/‖s(α)‖ − 1/(ντ); φ'(α) = ‖p‖²/‖s‖³.
        let step = (s_norm - nu_tau) * s_norm * s_norm / (nu_tau * p.norm_squared());
        let mut next = alpha + step;
        if next <= 0.0 {
            next = SAFEGUARD_THETA * alpha;
        }
        alpha = next.max(alpha_floor);
        let qr = stacked_qr(q.a, alpha)?;
        let (sa, pa) = solve_normal(&qr, &(-&v))?;
        s = sa;
        p = pa;
    }
}

pub fn prox_l2_quadratic(q: &ProxQuery) -> Result<ProxResult, Error> {
    let curv = q.curvature.as_ref().expect("curvature operator required");
    assert!(q.nu > 0.0 && q.tau > 0.0 && curv.nu_b >= 0.0);

    let n = q.w.len();
    let m = q.b.len();
    let nu_tau = q.nu * q.tau;
    let apply_q = |v: &DVector<f64>| -> DVector<f64> { v + curv.nu_b * curv.op.apply(v) };

    // Curvature probes: Q must be positive definite.
    let mut probes: Vec<DVector<f64>> = (0..n.min(8))
        .map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }))
        .collect();
    probes.push(DVector::from_element(n, 1.0 / (n as f64).sqrt()));
    for v in &probes {
        let quad = v.dot(&apply_q(v));
        if quad <= 0.0 {
            return Err(Error::IndefiniteCurvature { probe_value: quad });
        }
    }

    let saddle_apply = |alpha: f64| {
        move |z: &DVector<f64>| -> DVector<f64> {
            let u = z.rows(0, n).into_owned();
            let y = z.rows(n, m).into_owned();
            let mut out = DVector::zeros(n + m);
            let top = -apply_q(&u) + q.a.transpose() * &y;
            let bottom = q.a * &u + alpha * &y;
            out.rows_mut(0, n).copy_from(&top);
            out.rows_mut(n, m).copy_from(&bottom);
            out
        }
    };

    let solve_saddle = |alpha: f64, rhs: &DVector<f64>| -> Result<DVector<f64>, Error> {
        let apply = saddle_apply(alpha);
        let mut z = DVector::zeros(n + m);
        let mut residual = rhs.clone();
        let mut last_norm = f64::INFINITY;
        let mut iters = 0;
        // Iterative refinement recovers the accuracy MINRES loses to
        // round-off in its recurrences; acceptance is a backward-error
        // test, so near-singular systems with large solutions pass.
        for _ in 0..4 {
            let res = krylov_symmetric_solve(&apply, &residual, f64::EPSILON, KRYLOV_MAX_ITERS);
            iters += res.iterations;
            z += &res.solution;
            residual = rhs - apply(&z);
            let rn = residual.norm();
            if rn <= 1e-12 * (1.0 + rhs.norm() + z.norm()) {
                return Ok(z);
            }
            if rn >= 0.5 * last_norm {
                break;
            }
            last_norm = rn;
        }
        Err(Error::KrylovNonConvergence {
            residual: residual.norm(),
            iters,
        })
    };

    let alpha_floor = f64::EPSILON.sqrt();
    let tol = secular_tol(nu_tau);
    let mut rhs1 = DVector::zeros(n + m);
    rhs1.rows_mut(0, n).copy_from(&(-q.w));
    rhs1.rows_mut(n, m).copy_from(&(-q.b));

    let mut alpha = alpha_floor;
    let mut iters = 0;
    let mut trace = Vec::new();
    loop {
        let z = solve_saddle(alpha, &rhs1)?;
        let u = z.rows(0, n).into_owned();
        let y = z.rows(n, m).into_owned();
        let uqu = u.dot(&apply_q(&u));
        if u.norm() > 0.0 && uqu <= 0.0 {
            return Err(Error::IndefiniteCurvature { probe_value: uqu });
        }
        let y_norm = y.norm();
        let phi = if y_norm > 0.0 {
            1.0 / y_norm - 1.0 / nu_tau
        } else {
            f64::INFINITY
        };
        trace.push(SecularState {
            alpha,
            s_alpha: y.clone(),
            p: DVector::zeros(0),
            phi,
        });

        if iters == 0 && y_norm <= nu_tau {
            // Refine toward the α = 0 system to remove the bias of the
            // α floor; the floored operator still preconditions well.
            let apply0 = saddle_apply(0.0);
            let mut z_ref = z.clone();
            for _ in 0..2 {
                let r = &rhs1 - apply0(&z_ref);
                z_ref += solve_saddle(alpha, &r)?;
            }
            let u_ref = z_ref.rows(0, n).into_owned();
            let y_ref = z_ref.rows(n, m).into_owned();
            if y_ref.norm() <= nu_tau {
                return Ok(ProxResult {
                    u: u_ref,
                    y: y_ref,
                    alpha_star: 0.0,
                    newton_iters: iters,
                    branch: Branch::Interior,
                    secular_trace: trace,
                });
            }
            // ‖y(0)‖ barely exceeds ντ: α* sits below the floor, so the
            // floored solve is already within its accuracy.
            return Ok(ProxResult {
                u,
                y,
                alpha_star: alpha,
                newton_iters: iters,
                branch: Branch::Boundary,
                secular_trace: trace,
            });
        }
        if (y_norm - nu_tau).abs() < tol {
            return Ok(ProxResult {
                u,
                y,
                alpha_star: alpha,
                newton_iters: iters,
                branch: Branch::Boundary,
                secular_trace: trace,
            });
        }
        if iters >= MAX_NEWTON_ITERS {
            return Err(Error::SecularNonConvergence {
                iters,
                alpha,
                phi,
                s_norm: y_norm,
            });
        }
        iters += 1;

        // Newton ratio for φ_Q; the denominator needs
        // w̃ = (AQ⁻¹Aᵀ + αI)⁻¹ y from a second saddle-point solve.
        let mut rhs2 = DVector::zeros(n + m);
        rhs2.rows_mut(n, m).copy_from(&y);
        let z2 = solve_saddle(alpha, &rhs2)?;
        let w_tilde = z2.rows(n, m).into_owned();
        let denom = y.dot(&w_tilde);
        let ratio = (y_norm * y_norm / denom) * (1.0 - y_norm / nu_tau);
        let mut next = alpha - ratio;
        if next <= 0.0 {
            next = SAFEGUARD_THETA * alpha;
        }
        alpha = next.max(alpha_floor);
    }
}
