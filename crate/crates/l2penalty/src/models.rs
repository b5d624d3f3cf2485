//! First-order models of the penalized objective, the stationarity
//! measure ξ, the feasibility measure θ, and brute-force trust-region
//! oracles used by the test suite.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::problem::{Evaluator, Problem};
use crate::prox::{prox_l2_linear, ProxQuery};

/// Cached problem data at a point x, together with the penalty weight.
#[derive(Debug, Clone)]
pub struct ModelPoint {
    pub x: DVector<f64>,
    pub f: f64,
    pub g: DVector<f64>,
    pub c: DVector<f64>,
    pub j: DMatrix<f64>,
    pub tau: f64,
}

impl ModelPoint {
    pub fn evaluate(ev: &mut Evaluator, x: &DVector<f64>, tau: f64) -> Self {
        ModelPoint {
            x: x.clone(),
            f: ev.f(x),
            g: ev.grad(x),
            c: ev.c(x),
            j: ev.jac(x),
            tau,
        }
    }
}

/// f(x) + τ‖c(x)‖₂.
pub fn penalty_objective(mp: &ModelPoint) -> f64 {
    mp.f + mp.tau * mp.c.norm()
}

/// Value of the first-order model at step s: f + gᵀs + τ‖c + Js‖₂.
pub fn model_value(mp: &ModelPoint, s: &DVector<f64>) -> f64 {
    mp.f + mp.g.dot(s) + mp.tau * (&mp.c + &mp.j * s).norm()
}

/// Stationarity measure: model decrease achieved by the Cauchy point.
///
/// Returns (ξ, s_cp, prox Newton iterations). The inner stopping
/// statistic is √(σ·ξ).
pub fn xi(mp: &ModelPoint, sigma: f64) -> Result<(f64, DVector<f64>, usize), Error> {
    assert!(sigma > 0.0);
    let nu = 1.0 / sigma;
    let w = -nu * &mp.g;
    let r = prox_l2_linear(&ProxQuery {
        a: &mp.j,
        b: &mp.c,
        w: &w,
        nu,
        tau: mp.tau,
        curvature: None,
    })?;
    let s_cp = r.u;
    let mut value = penalty_objective(mp) - model_value(mp, &s_cp);
    // s = 0 is feasible for the prox problem, so ξ ≥ 0 up to round-off.
    if value < 0.0 {
        debug_assert!(value.abs() <= 1e-12 * (1.0 + mp.f.abs()), "xi = {value}");
        value = 0.0;
    }
    Ok((value, s_cp, r.newton_iters))
}

/// Feasibility measure: ξ specialized to f = 0 with ν = τ = 1.
/// Returns θ(x) = ‖c‖ − ‖c + Js*‖ ∈ [0, ‖c‖].
pub fn theta(c: &DVector<f64>, j: &DMatrix<f64>) -> Result<f64, Error> {
    let w = DVector::zeros(j.ncols());
    let r = prox_l2_linear(&ProxQuery {
        a: j,
        b: c,
        w: &w,
        nu: 1.0,
        tau: 1.0,
        curvature: None,
    })?;
    let value = c.norm() - (c + j * &r.u).norm();
    Ok(value.clamp(0.0, c.norm()))
}

/// Minimum-norm least-squares multipliers and the KKT residual
/// ‖∇f + Jᵀy‖ computed from cached derivatives.
pub fn kkt_from_parts(g: &DVector<f64>, j: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let rhs = -(j * g);
    let y = crate::linalg::solve_least_norm(j, &rhs).expect("finite KKT system");
    let residual = (g + j.transpose() * &y).norm();
    (residual, y)
}

/// Empirical model-error constant |f(x+s) + h_τ(c(x+s)) − m_τ(s;x)| / ‖s‖².
pub fn model_error_diagnostic(p: &Problem, x: &DVector<f64>, s: &DVector<f64>, tau: f64) -> f64 {
    assert!(s.norm() > 0.0);
    let mut ev = Evaluator::new(p);
    let mp = ModelPoint::evaluate(&mut ev, x, tau);
    let xs = x + s;
    let actual = p.f(&xs) + tau * p.c(&xs).norm();
    (actual - model_value(&mp, s)).abs() / s.norm_squared()
}

// ---------------------------------------------------------------------
// Brute-force trust-region oracles (test-only; not on the solver path).
// ---------------------------------------------------------------------

/// Minimizes `obj` over the unit ball by projected subgradient descent
/// with a dynamic Polyak step, from `starts` plus s = 0.
fn ball_minimize<F, G>(n: usize, obj: F, subgrad: G, starts: &[DVector<f64>]) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut global_best = f64::INFINITY;
    let mut all_starts = vec![DVector::zeros(n)];
    all_starts.extend_from_slice(starts);
    for start in &all_starts {
        let mut s = start.clone();
        let mut fs = obj(&s);
        let mut best = fs;
        let mut delta = 1.0 + fs.abs();
        let mut no_improve = 0usize;
        for _ in 0..10_000 {
            let v = subgrad(&s);
            let vn2 = v.norm_squared();
            if vn2 < 1e-30 {
                break;
            }
            let step = (fs - (best - delta)) / vn2;
            s -= step * &v;
            let norm = s.norm();
            if norm > 1.0 {
                s /= norm;
            }
            fs = obj(&s);
            if fs < best - 1e-16 * (1.0 + best.abs()) {
                best = fs;
                no_improve = 0;
            } else {
                no_improve += 1;
                if no_improve >= 10 {
                    delta *= 0.5;
                    no_improve = 0;
                    if delta < 1e-15 * (1.0 + best.abs()) {
                        break;
                    }
                }
            }
        }
        global_best = global_best.min(best);
    }
    global_best
}

fn random_ball_starts(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let norm = v.norm();
            if norm > 1.0 {
                v /= norm;
            }
            v
        })
        .collect()
}

/// Trust-region stationarity measure ξ_TR by brute force (n ≤ 4).
pub fn xi_tr_oracle(mp: &ModelPoint, seed: u64) -> f64 {
    assert!(mp.x.len() <= 4);
    let starts = random_ball_starts(mp.x.len(), 64, seed);
    let min_model = ball_minimize(
        mp.x.len(),
        |s| model_value(mp, s),
        |s| {
            let r = &mp.c + &mp.j * s;
            let rn = r.norm();
            if rn > 1e-14 {
                &mp.g + mp.tau * (mp.j.transpose() * r) / rn
            } else {
                mp.g.clone()
            }
        },
        &starts,
    );
    (penalty_objective(mp) - min_model).max(0.0)
}

/// Trust-region feasibility measure θ_TR by brute force (n ≤ 4).
pub fn theta_tr_oracle(c: &DVector<f64>, j: &DMatrix<f64>, seed: u64) -> f64 {
    let n = j.ncols();
    assert!(n <= 4);
    let starts = random_ball_starts(n, 64, seed);
    let min_psi = ball_minimize(
        n,
        |s| (c + j * s).norm(),
        |s| {
            let r = c + j * s;
            let rn = r.norm();
            if rn > 1e-14 {
                (j.transpose() * r) / rn
            } else {
                DVector::zeros(n)
            }
        },
        &starts,
    );
    (c.norm() - min_psi).max(0.0)
}
