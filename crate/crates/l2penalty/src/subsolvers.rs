//! Inner solvers for the penalized problem min f(x) + τ‖c(x)‖₂ at a
//! fixed penalty weight: adaptive proximal gradient (R2) and proximal
//! quasi-Newton (R2N).

use nalgebra::DVector;

pub use crate::linalg::QnKind;

use crate::error::Error;
use crate::linalg::{qn_update, QuasiNewtonOp};
use crate::models::{kkt_from_parts, model_value, penalty_objective, xi, ModelPoint};
use crate::problem::Evaluator;
use crate::prox::{prox_l2_quadratic, Curvature, ProxQuery};

#[derive(Debug, Clone)]
pub struct InnerConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub gamma1: f64,
    pub gamma3: f64,
    pub sigma_min: f64,
    pub max_inner: usize,
    pub theta_param: f64,
    pub qn_kind: Option<QnKind>,
    pub qn_memory: usize,
    /// When set, stop as soon as the iterate satisfies the practical KKT
    /// test ‖∇f + Jᵀy_ls‖ ≤ tol and ‖c‖ ≤ tol.
    pub kkt_early_exit: Option<f64>,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            eta1: 1e-4,
            eta2: 0.9,
            gamma1: 3.0,
            gamma3: 1.0 / 3.0,
            sigma_min: f64::EPSILON,
            max_inner: 10_000,
            theta_param: 0.5,
            qn_kind: None,
            qn_memory: 5,
            kkt_early_exit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStatus {
    FirstOrder,
    MaxIter,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TraceRow {
    pub j: usize,
    pub f: f64,
    pub c_norm: f64,
    pub xi: f64,
    pub sigma: f64,
    pub rho: f64,
    pub accepted: bool,
    pub prox_newton_iters: usize,
    pub decrease: f64,
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub x: DVector<f64>,
    pub sigma_final: f64,
    pub xi_final: f64,
    pub status: InnerStatus,
    pub inner_iters: usize,
    pub accepted_steps: usize,
    pub trace: Vec<TraceRow>,
}

fn kkt_early_exit(cfg: &InnerConfig, mp: &ModelPoint) -> bool {
    match cfg.kkt_early_exit {
        Some(tol) => {
            mp.c.norm() <= tol && {
                let (res, _) = kkt_from_parts(&mp.g, &mp.j);
                res <= tol
            }
        }
        None => false,
    }
}

/// Adaptive proximal-gradient descent on f + τ‖c‖₂.
///
/// Stops when √(σξ) ≤ ε, where ξ is the model decrease of the proximal
/// gradient step with ν = 1/σ.
pub fn r2_solve(
    ev: &mut Evaluator,
    x_start: &DVector<f64>,
    tau: f64,
    eps: f64,
    sigma0: f64,
    cfg: &InnerConfig,
) -> Result<InnerResult, Error> {
    let mut x = x_start.clone();
    let mut mp = ModelPoint::evaluate(ev, &x, tau);
    let mut sigma = sigma0.max(cfg.sigma_min);
    let mut trace = Vec::new();
    let mut accepted_steps = 0usize;
    let mut iters = 0usize;

    let (status, xi_final) = loop {
        let (xi_val, s_cp, prox_iters) = xi(&mp, sigma)?;
        if (sigma * xi_val).sqrt() <= eps || xi_val <= f64::EPSILON * (1.0 + mp.f.abs()) {
            break (InnerStatus::FirstOrder, xi_val);
        }
        if kkt_early_exit(cfg, &mp) {
            break (InnerStatus::FirstOrder, xi_val);
        }
        if iters >= cfg.max_inner {
            break (InnerStatus::MaxIter, xi_val);
        }
        iters += 1;

        let x_trial = &x + &s_cp;
        let f_trial = ev.f(&x_trial);
        let c_trial = ev.c(&x_trial);
        let decrease = penalty_objective(&mp) - (f_trial + tau * c_trial.norm());
        let rho = decrease / xi_val;
        let accepted = rho >= cfg.eta1;
        trace.push(TraceRow {
            j: iters,
            f: mp.f,
            c_norm: mp.c.norm(),
            xi: xi_val,
            sigma,
            rho,
            accepted,
            prox_newton_iters: prox_iters,
            decrease,
        });
        if accepted {
            x = x_trial;
            mp = ModelPoint {
                x: x.clone(),
                f: f_trial,
                g: ev.grad(&x),
                c: c_trial,
                j: ev.jac(&x),
                tau,
            };
            accepted_steps += 1;
        }
        if rho < cfg.eta1 {
            sigma *= cfg.gamma1;
        } else if rho >= cfg.eta2 {
            sigma = (cfg.gamma3 * sigma).max(cfg.sigma_min);
        }
    };

    Ok(InnerResult {
        x,
        sigma_final: sigma,
        xi_final,
        status,
        inner_iters: iters,
        accepted_steps,
        trace,
    })
}

/// Proximal quasi-Newton descent on f + τ‖c‖₂ with a limited-memory
/// Hessian approximation B of f.
///
/// The step solves the quadratic-model proximal problem with regularizer
/// Q = σ·B-model; stationarity is still measured through the linear
/// model, at the tighter weight σ̃ = (σ + ‖B‖)/θ.
pub fn r2n_solve(
    ev: &mut Evaluator,
    x_start: &DVector<f64>,
    tau: f64,
    eps: f64,
    sigma0: f64,
    cfg: &InnerConfig,
) -> Result<InnerResult, Error> {
    let kind = cfg.qn_kind.expect("r2n_solve requires a quasi-Newton kind");
    let mut x = x_start.clone();
    let mut mp = ModelPoint::evaluate(ev, &x, tau);
    let mut op = QuasiNewtonOp::new(kind, x.len(), cfg.qn_memory);
    let mut sigma = sigma0.max(cfg.sigma_min);
    let mut trace = Vec::new();
    let mut accepted_steps = 0usize;
    let mut iters = 0usize;

    let (status, xi_final) = loop {
        let sigma_tilde = (sigma + op.norm_estimate) / cfg.theta_param;
        let (xi_val, _, _) = xi(&mp, sigma_tilde)?;
        if (sigma_tilde * xi_val).sqrt() <= eps || xi_val <= f64::EPSILON * (1.0 + mp.f.abs()) {
            break (InnerStatus::FirstOrder, xi_val);
        }
        if kkt_early_exit(cfg, &mp) {
            break (InnerStatus::FirstOrder, xi_val);
        }
        if iters >= cfg.max_inner {
            break (InnerStatus::MaxIter, xi_val);
        }
        iters += 1;

        let nu = 1.0 / sigma;
        let w = -nu * &mp.g;
        let prox = prox_l2_quadratic(&ProxQuery {
            a: &mp.j,
            b: &mp.c,
            w: &w,
            nu,
            tau,
            curvature: Some(Curvature { op: &op, nu_b: nu }),
        });
        let prox = match prox {
            Ok(r) => r,
            Err(Error::IndefiniteCurvature { .. }) => {
                trace.push(TraceRow {
                    j: iters,
                    f: mp.f,
                    c_norm: mp.c.norm(),
                    xi: xi_val,
                    sigma,
                    rho: f64::NAN,
                    accepted: false,
                    prox_newton_iters: 0,
                    decrease: 0.0,
                });
                sigma *= cfg.gamma1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let s = prox.u;

        // Quadratic model decrease, without the σ regularization term.
        let quad = 0.5 * s.dot(&op.apply(&s));
        let dm = penalty_objective(&mp) - (model_value(&mp, &s) + quad);
        let x_trial = &x + &s;
        let f_trial = ev.f(&x_trial);
        let c_trial = ev.c(&x_trial);
        let decrease = penalty_objective(&mp) - (f_trial + tau * c_trial.norm());
        let rho = decrease / dm;
        let accepted = dm > 0.0 && rho >= cfg.eta1;
        trace.push(TraceRow {
            j: iters,
            f: mp.f,
            c_norm: mp.c.norm(),
            xi: dm,
            sigma,
            rho,
            accepted,
            prox_newton_iters: prox.newton_iters,
            decrease,
        });
        if accepted {
            let g_trial = ev.grad(&x_trial);
            op = qn_update(&op, &s, &(&g_trial - &mp.g))?;
            x = x_trial;
            mp = ModelPoint {
                x: x.clone(),
                f: f_trial,
                g: g_trial,
                c: c_trial,
                j: ev.jac(&x),
                tau,
            };
            accepted_steps += 1;
        }
        if rho < cfg.eta1 || dm <= 0.0 {
            sigma *= cfg.gamma1;
        } else if rho >= cfg.eta2 {
            sigma = (cfg.gamma3 * sigma).max(cfg.sigma_min);
        }
    };

    Ok(InnerResult {
        x,
        sigma_final: sigma,
        xi_final,
        status,
        inner_iters: iters,
        accepted_steps,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{registry_get, Problem};
    use nalgebra::DMatrix;

    fn solve_r2(p: &Problem, tau: f64, eps: f64) -> (InnerResult, Evaluator<'_>) {
        let mut ev = Evaluator::new(p);
        let cfg = InnerConfig::default();
        let res = r2_solve(&mut ev, &p.x0, tau, eps, 1.0, &cfg).unwrap();
        (res, ev)
    }

    #[test]
    fn r2_unconstrained_quadratic() {
        // min ½‖x − (1, 2)‖² with a vacuous constraint row.
        let p = Problem::new(
            2,
            1,
            DVector::zeros(2),
            Box::new(|x| 0.5 * ((x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2))),
            Box::new(|x| DVector::from_row_slice(&[x[0] - 1.0, x[1] - 2.0])),
            Box::new(|_| DVector::zeros(1)),
            Box::new(|_| DMatrix::zeros(1, 2)),
        );
        let (res, _) = solve_r2(&p, 1.0, 1e-8);
        assert_eq!(res.status, InnerStatus::FirstOrder);
        assert!((res.x[0] - 1.0).abs() < 1e-6);
        assert!((res.x[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn r2_exactness_on_qp() {
        // min ½‖x‖² s.t. x₁ = 1: multiplier −1, so any τ > 1 is exact.
        let p = registry_get("qp-known-multiplier").unwrap();
        let (res, _) = solve_r2(&p, 2.0, 1e-9);
        assert_eq!(res.status, InnerStatus::FirstOrder);
        assert!((res.x[0] - 1.0).abs() < 1e-5, "x = {}", res.x);
        assert!(res.x[1].abs() < 1e-5);
        assert!(res.x[2].abs() < 1e-5);
    }

    #[test]
    fn r2_small_tau_is_not_exact() {
        // τ = 0.5 < |y*| leaves a feasibility gap.
        let p = registry_get("qp-known-multiplier").unwrap();
        let (res, _) = solve_r2(&p, 0.5, 1e-9);
        assert_eq!(res.status, InnerStatus::FirstOrder);
        assert!((res.x[0] - 1.0).abs() > 1e-2);
    }

    #[test]
    fn r2_eval_counts() {
        let p = registry_get("hs6").unwrap();
        let (res, ev) = solve_r2(&p, 10.0, 1e-4);
        assert_eq!(ev.counters.n_f, res.inner_iters as u64 + 1);
        assert_eq!(ev.counters.n_c, res.inner_iters as u64 + 1);
        assert_eq!(ev.counters.n_grad, res.accepted_steps as u64 + 1);
        assert_eq!(ev.counters.n_jac, res.accepted_steps as u64 + 1);
    }

    #[test]
    fn r2_accepted_steps_decrease_objective() {
        let p = registry_get("hs7").unwrap();
        let (res, _) = solve_r2(&p, 5.0, 1e-5);
        let cfg = InnerConfig::default();
        for row in &res.trace {
            assert!(row.xi > 0.0);
            if row.accepted {
                assert!(row.decrease >= cfg.eta1 * row.xi - 1e-12);
            }
        }
    }

    #[test]
    fn r2n_lbfgs_on_qp() {
        let p = registry_get("qp-known-multiplier").unwrap();
        let mut ev = Evaluator::new(&p);
        let cfg = InnerConfig {
            qn_kind: Some(QnKind::Lbfgs),
            ..Default::default()
        };
        let res = r2n_solve(&mut ev, &p.x0, 2.0, 1e-9, 1.0, &cfg).unwrap();
        assert_eq!(res.status, InnerStatus::FirstOrder);
        assert!((res.x[0] - 1.0).abs() < 1e-5, "x = {}", res.x);
    }

    #[test]
    fn r2n_lsr1_on_hs6() {
        let p = registry_get("hs6").unwrap();
        let mut ev = Evaluator::new(&p);
        let cfg = InnerConfig {
            qn_kind: Some(QnKind::Lsr1),
            max_inner: 3000,
            ..Default::default()
        };
        let res = r2n_solve(&mut ev, &p.x0, 10.0, 1e-5, 1.0, &cfg).unwrap();
        assert_eq!(res.status, InnerStatus::FirstOrder);
        // Unique feasible-optimal point of hs6 is (1, 1).
        assert!((res.x[0] - 1.0).abs() < 1e-2, "x = {}", res.x);
    }

    #[test]
    fn monotone_penalty_objective() {
        let p = registry_get("hs26").unwrap();
        let (res, _) = solve_r2(&p, 5.0, 1e-4);
        let mut last = f64::INFINITY;
        for row in &res.trace {
            let obj = row.f + 5.0 * row.c_norm;
            assert!(obj <= last + 1e-10);
            if row.accepted {
                last = obj;
            } else {
                last = last.min(obj);
            }
        }
    }

    #[test]
    fn max_inner_budget() {
        let p = registry_get("hs78").unwrap();
        let mut ev = Evaluator::new(&p);
        let cfg = InnerConfig {
            max_inner: 2,
            ..Default::default()
        };
        let res = r2_solve(&mut ev, &p.x0, 100.0, 1e-12, 1.0, &cfg).unwrap();
        assert_eq!(res.status, InnerStatus::MaxIter);
        assert_eq!(res.inner_iters, 2);
    }
}
