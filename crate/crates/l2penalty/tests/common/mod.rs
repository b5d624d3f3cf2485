//! Shared helpers for the integration test suites: random prox
//! instances and a dense direct solver used as an independent oracle.

use l2penalty::linalg::{qn_update, QnKind, QuasiNewtonOp};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct ProxInstance {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub w: DVector<f64>,
    pub nu: f64,
    pub tau: f64,
    /// Quasi-Newton curvature for the quadratic prox; `None` selects the
    /// linear prox with Q = I.
    pub op: Option<(QuasiNewtonOp, f64)>,
    #[allow(dead_code)]
    pub rank_deficient: bool,
}

impl ProxInstance {
    /// Dense Q = I + ν_B·B.
    pub fn q_dense(&self) -> DMatrix<f64> {
        let n = self.a.ncols();
        let mut q = DMatrix::identity(n, n);
        if let Some((op, nu_b)) = &self.op {
            for j in 0..n {
                let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
                let col = &e + *nu_b * op.apply(&e);
                q.set_column(j, &col);
            }
        }
        q
    }
}

/// Matrix with orthonormal rows scaled by prescribed singular values.
fn row_orthonormal(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = g.qr().q();
    q.transpose().rows(0, m).into_owned()
}

pub fn random_instance(index: usize, seed: u64) -> ProxInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let rank_deficient = index < 50;
    let n = rng.gen_range(2..=10usize);
    let m = rng.gen_range(2..=n);
    let interior = index % 2 == 0;
    let quadratic = index % 3 == 0;

    let mut a = row_orthonormal(&mut rng, m, n);
    for i in 0..m {
        let sv = rng.gen_range(0.5..2.0);
        for j in 0..n {
            a[(i, j)] *= sv;
        }
    }
    if rank_deficient {
        // Last row becomes a combination of the others.
        let dup = a.row(0) * 0.5 + a.row(1) * 0.5;
        a.set_row(m - 1, &dup);
    }

    let scale = if interior { 0.05 } else { 2.0 };
    let mut b = DVector::from_fn(m, |_, _| rng.gen_range(-scale..scale));
    if rank_deficient && interior {
        // Consistent right-hand side: b in the range of A.
        let z = DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale));
        b = &a * z;
    }
    let w = DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale));
    let nu_tau = if interior {
        1.0
    } else {
        rng.gen_range(0.2..1.0)
    };
    let nu = rng.gen_range(0.5..2.0);
    let tau = nu_tau / nu;

    let op = if quadratic {
        let mut op = QuasiNewtonOp::new(QnKind::Lbfgs, n, 5);
        for _ in 0..2 {
            let s = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0f64));
            // y = D·s with a positive diagonal keeps curvature positive.
            let y = DVector::from_fn(n, |i, _| s[i] * rng.gen_range(0.5..1.5));
            op = qn_update(&op, &s, &y).expect("dimensions match");
        }
        let nu_b = rng.gen_range(0.1..1.0);
        Some((op, nu_b))
    } else {
        None
    };

    ProxInstance {
        a,
        b,
        w,
        nu,
        tau,
        op,
        rank_deficient,
    }
}

#[allow(dead_code)]
pub struct OracleSolution {
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub interior: bool,
}

/// Direct dense solver for min ½ν⁻¹(uᵀQu − 2wᵀu) + τ‖Au + b‖ through
/// the dual: y = −(AQ⁻¹Aᵀ + αI)⁻¹(AQ⁻¹w + b) with ‖y‖ ≤ ντ, α ≥ 0,
/// α(‖y‖ − ντ) = 0, then u = Q⁻¹(w + Aᵀy).
pub fn dense_prox_oracle(inst: &ProxInstance) -> OracleSolution {
    let a = &inst.a;
    let m = a.nrows();
    let nu_tau = inst.nu * inst.tau;
    let q = inst.q_dense();
    let chol = q.clone().cholesky().expect("Q positive definite");
    let qinv_at = chol.solve(&a.transpose());
    let m_mat = a * &qinv_at;
    let v = a * chol.solve(&inst.w) + &inst.b;

    let eig = SymmetricEigen::new(m_mat);
    let lam = &eig.eigenvalues;
    let vmat = &eig.eigenvectors;
    let c = vmat.transpose() * &v;
    let lam_max = lam.iter().cloned().fold(0.0f64, f64::max);
    let rank_tol = lam_max * (m as f64) * f64::EPSILON;

    let y_of = |alpha: f64| -> DVector<f64> {
        let coeff = DVector::from_fn(m, |i, _| {
            let d = lam[i] + alpha;
            if d > rank_tol {
                -c[i] / d
            } else {
                0.0
            }
        });
        vmat * coeff
    };
    let norm2_of = |alpha: f64| -> f64 {
        (0..m)
            .map(|i| {
                let d = lam[i] + alpha;
                if d > rank_tol {
                    (c[i] / d).powi(2)
                } else {
                    0.0
                }
            })
            .sum()
    };

    let consistent = (0..m).all(|i| lam[i] > rank_tol || c[i].abs() <= 1e-10 * (1.0 + v.norm()));
    if consistent && norm2_of(0.0).sqrt() <= nu_tau {
        let y = y_of(0.0);
        let u = chol.solve(&(&inst.w + a.transpose() * &y));
        return OracleSolution {
            u,
            y,
            interior: true,
        };
    }

    let target = nu_tau * nu_tau;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while norm2_of(hi) > target {
        hi *= 2.0;
        assert!(hi < 1e300);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm2_of(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let y = y_of(alpha);
    let u = chol.solve(&(&inst.w + a.transpose() * &y));
    OracleSolution {
        u,
        y,
        interior: false,
    }
}

/// Prox objective ½ν⁻¹(uᵀQu − 2wᵀu) + τ‖Au + b‖.
pub fn prox_objective(inst: &ProxInstance, u: &DVector<f64>) -> f64 {
    let q = inst.q_dense();
    let quad = u.dot(&(&q * u)) - 2.0 * inst.w.dot(u);
    0.5 * quad / inst.nu + inst.tau * (&inst.a * u + &inst.b).norm()
}
