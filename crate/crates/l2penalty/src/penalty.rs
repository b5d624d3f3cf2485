//! Outer exact-penalty loop: drives the inner solvers over a sequence of
//! penalty weights τ and tolerances ε until a practical KKT point of the
//! constrained problem is found, or infeasible stationarity is declared.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::Error;
use crate::models::{kkt_from_parts, theta};
use crate::problem::{EvalCounters, Evaluator, Problem};
use crate::subsolvers::{r2_solve, r2n_solve, InnerConfig, InnerStatus, TraceRow};

#[derive(Debug, Clone)]
pub struct OuterConfig {
    pub tau0: f64,
    /// Additive penalty increase τ ← τ + β₁.
    pub beta1: f64,
    /// Tolerance decrease factor ε ← β₂ε.
    pub beta2: f64,
    /// Inner regularization restart σ₀ = max(β₃τ, β₄).
    pub beta3: f64,
    /// Lower bound σ_min = β₄.
    pub beta4: f64,
    pub eps0: f64,
    pub eps_final: f64,
    pub max_outer: usize,
    /// Cap on the cumulative number of inner iterations.
    pub max_total_inner: usize,
    pub max_time_s: f64,
    /// Declare infeasible stationarity after this many consecutive τ
    /// increases without feasibility progress.
    pub max_tau_increases: usize,
}

impl Default for OuterConfig {
    fn default() -> Self {
        OuterConfig {
            tau0: 500.0,
            beta1: 500.0,
            beta2: 0.1,
            beta3: 1e-2,
            beta4: f64::EPSILON,
            eps0: 1e-2,
            eps_final: 1e-3,
            max_outer: 10_000,
            max_total_inner: 10_000,
            max_time_s: 300.0,
            max_tau_increases: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    FirstOrder,
    InfeasibleStationary,
    MaxIter,
    TimeLimit,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct OuterTraceRow {
    pub k: usize,
    pub tau: f64,
    pub eps: f64,
    pub theta_sqrt: f64,
    pub kkt_residual: f64,
    pub c_norm: f64,
    pub inner_iters: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub y_ls: DVector<f64>,
    pub kkt_residual: f64,
    pub feasibility: f64,
    pub theta_final: f64,
    pub tau_final: f64,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    pub counters: EvalCounters,
    pub wall_time_s: f64,
    pub outer_trace: Vec<OuterTraceRow>,
    /// Inner trace rows tagged with the outer index.
    pub inner_trace: Vec<(usize, TraceRow)>,
}

/// Minimum-norm least-squares multipliers at x and the residual
/// ‖∇f(x) + J(x)ᵀy‖.
pub fn kkt_residual(p: &Problem, x: &DVector<f64>) -> (f64, DVector<f64>) {
    kkt_from_parts(&p.grad(x), &p.jac(x))
}

/// Exact ℓ2-penalty method.
pub fn solve(p: &Problem, cfg: &OuterConfig, inner_cfg: &InnerConfig) -> Result<SolveReport, Error> {
    let start = Instant::now();
    let mut ev = Evaluator::new(p);
    let mut x = p.x0.clone();
    let mut tau = cfg.tau0;
    let mut eps = cfg.eps0.max(cfg.eps_final);
    let mut total_inner = 0usize;
    let mut outer_trace = Vec::new();
    let mut inner_trace = Vec::new();
    let mut tau_increases = 0usize;
    let mut best_theta_sqrt = f64::INFINITY;

    let finish = |status: SolveStatus,
                      x: DVector<f64>,
                      kkt_res: f64,
                      y_ls: DVector<f64>,
                      feas: f64,
                      th: f64,
                      tau: f64,
                      k: usize,
                      total_inner: usize,
                      counters: EvalCounters,
                      outer_trace: Vec<OuterTraceRow>,
                      inner_trace: Vec<(usize, TraceRow)>| SolveReport {
        status,
        x,
        y_ls,
        kkt_residual: kkt_res,
        feasibility: feas,
        theta_final: th,
        tau_final: tau,
        outer_iters: k,
        total_inner_iters: total_inner,
        counters,
        wall_time_s: start.elapsed().as_secs_f64(),
        outer_trace,
        inner_trace,
    };

    for k in 1..=cfg.max_outer {
        let sigma0 = (cfg.beta3 * tau).max(cfg.beta4);
        let mut icfg = inner_cfg.clone();
        icfg.sigma_min = cfg.beta4.max(inner_cfg.sigma_min);
        icfg.max_inner = icfg
            .max_inner
            .min(cfg.max_total_inner.saturating_sub(total_inner));
        icfg.kkt_early_exit = Some(cfg.eps_final);

        let inner = match icfg.qn_kind {
            Some(_) => r2n_solve(&mut ev, &x, tau, eps, sigma0, &icfg)?,
            None => r2_solve(&mut ev, &x, tau, eps, sigma0, &icfg)?,
        };
        x = inner.x.clone();
        total_inner += inner.inner_iters;
        for row in inner.trace {
            inner_trace.push((k, row));
        }

        let g = p.grad(&x);
        let j = p.jac(&x);
        let cvec = p.c(&x);
        let feas = cvec.norm();
        let (kkt_res, y_ls) = kkt_from_parts(&g, &j);
        let th = theta(&cvec, &j)?;
        let th_sqrt = th.sqrt();
        outer_trace.push(OuterTraceRow {
            k,
            tau,
            eps,
            theta_sqrt: th_sqrt,
            kkt_residual: kkt_res,
            c_norm: feas,
            inner_iters: inner.inner_iters,
        });

        if kkt_res <= cfg.eps_final && feas <= cfg.eps_final {
            return Ok(finish(
                SolveStatus::FirstOrder,
                x,
                kkt_res,
                y_ls,
                feas,
                th,
                tau,
                k,
                total_inner,
                ev.counters,
                outer_trace,
                inner_trace,
            ));
        }

        // Infeasible stationary point: the square root of the
        // feasibility measure has converged below the final tolerance at
        // the final tolerance level, yet the constraints are violated.
        let stationary_infeasible = feas > cfg.eps_final
            && th_sqrt <= cfg.eps_final
            && ((eps <= cfg.eps_final && inner.status == InnerStatus::FirstOrder)
                || tau_increases >= cfg.max_tau_increases);
        if stationary_infeasible {
            return Ok(finish(
                SolveStatus::InfeasibleStationary,
                x,
                kkt_res,
                y_ls,
                feas,
                th,
                tau,
                k,
                total_inner,
                ev.counters,
                outer_trace,
                inner_trace,
            ));
        }

        let exhausted = total_inner >= cfg.max_total_inner || k == cfg.max_outer;
        let timed_out = start.elapsed().as_secs_f64() > cfg.max_time_s;
        if exhausted || timed_out {
            let status = if timed_out {
                SolveStatus::TimeLimit
            } else {
                SolveStatus::MaxIter
            };
            return Ok(finish(
                status, x, kkt_res, y_ls, feas, th, tau, k, total_inner, ev.counters,
                outer_trace, inner_trace,
            ));
        }

        if th_sqrt > eps {
            tau += cfg.beta1;
            if th_sqrt < 0.9 * best_theta_sqrt {
                tau_increases = 0;
            } else {
                tau_increases += 1;
            }
        } else {
            eps = (cfg.beta2 * eps).max(cfg.eps_final);
            tau_increases = 0;
        }
        best_theta_sqrt = best_theta_sqrt.min(th_sqrt);
    }
    unreachable!("loop returns at k == max_outer");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::registry_get;

    fn default_solve(name: &str) -> SolveReport {
        let p = registry_get(name).unwrap();
        solve(&p, &OuterConfig::default(), &InnerConfig::default()).unwrap()
    }

    #[test]
    fn qp_known_multiplier_first_order() {
        let rep = default_solve("qp-known-multiplier");
        assert_eq!(rep.status, SolveStatus::FirstOrder);
        assert!((rep.x[0] - 1.0).abs() < 1e-2, "x = {}", rep.x);
        assert!((rep.y_ls[0] + 1.0).abs() < 1e-2, "y = {}", rep.y_ls);
        assert!(rep.kkt_residual <= 1e-3);
        assert!(rep.feasibility <= 1e-3);
    }

    #[test]
    fn hs6_first_order() {
        let rep = default_solve("hs6");
        assert_eq!(rep.status, SolveStatus::FirstOrder);
        assert!((rep.x[0] - 1.0).abs() < 1e-2);
        assert!((rep.x[1] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn infeasible_circle_detected() {
        let rep = default_solve("infeasible-circle");
        assert_eq!(rep.status, SolveStatus::InfeasibleStationary);
        assert!(rep.feasibility >= 1.0 - 1e-6);
        assert!(rep.x[0].abs() < 1e-1, "x = {}", rep.x);
    }

    #[test]
    fn tolerance_schedule_monotone() {
        let rep = default_solve("hs7");
        let mut last_eps = f64::INFINITY;
        let mut last_tau = 0.0;
        for row in &rep.outer_trace {
            assert!(row.eps <= last_eps);
            assert!(row.tau >= last_tau);
            last_eps = row.eps;
            last_tau = row.tau;
        }
    }

    #[test]
    fn report_counters_populated() {
        let rep = default_solve("linear-quadratic");
        assert_eq!(rep.status, SolveStatus::FirstOrder);
        assert!(rep.counters.n_f > 0);
        assert!(rep.counters.n_grad > 0);
        assert!(rep.wall_time_s >= 0.0);
        assert!(rep.total_inner_iters > 0);
    }
}
