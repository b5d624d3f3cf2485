use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct KrylovResult {
    pub solution: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Absolute residual norm ‖M·solution − rhs‖.
    pub residual: f64,
}

/// MINRES for symmetric, possibly indefinite or singular systems.
///
/// Started from zero, the iterates live in the Krylov space of the
/// operator, so for consistent singular systems the limit is the
/// minimum-norm solution.
pub fn krylov_symmetric_solve<F>(
    apply: F,
    rhs: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> KrylovResult
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = rhs.len();
    let mut x = DVector::zeros(n);
    let beta1 = rhs.norm();
    if beta1 == 0.0 {
        return KrylovResult {
            solution: x,
            converged: true,
            iterations: 0,
            residual: 0.0,
        };
    }

    let mut y = rhs.clone();
    let mut r1 = rhs.clone();
    let mut r2 = rhs.clone();

    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs: f64 = -1.0;
    let mut sn = 0.0;
    let mut w = DVector::zeros(n);
    let mut w2 = DVector::zeros(n);

    let mut iterations = 0;
    let mut best_phibar = phibar;
    let mut stall = 0usize;

    for itn in 1..=max_iter {
        iterations = itn;
        let v = &y / beta;
        y = apply(&v);
        if itn >= 2 {
            y -= (beta / oldb) * &r1;
        }
        let alfa = v.dot(&y);
        y -= (alfa / beta) * &r2;
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = y.norm();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;

        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar = sn * phibar;

        let w1 = std::mem::replace(&mut w2, w.clone());
        w = (&v - oldeps * &w1 - delta * &w2) / gamma;
        x += phi * &w;

        if phibar <= tol * beta1 {
            break;
        }
        // Lanczos breakdown: the Krylov space is exhausted.
        if beta <= f64::EPSILON * beta1 {
            break;
        }
        if phibar < best_phibar * (1.0 - 1e-3) {
            best_phibar = phibar;
            stall = 0;
        } else {
            stall += 1;
            if stall > 50 {
                break;
            }
        }
    }

    let residual = (apply(&x) - rhs).norm();
    KrylovResult {
        converged: residual <= tol * beta1,
        solution: x,
        iterations,
        residual,
    }
}
