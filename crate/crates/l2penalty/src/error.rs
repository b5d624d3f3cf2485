use thiserror::Error;

/// Errors shared across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("callback returned wrong shape: expected {expected}, got {got}")]
    ShapeError { expected: usize, got: usize },

    #[error("unknown problem {name:?}; available: {available:?}")]
    UnknownProblem {
        name: String,
        available: Vec<String>,
    },

    #[error("stacked QR factor is rank deficient; regularize with alpha > 0")]
    SingularFactor,

    #[error(
        "secular Newton did not converge after {iters} iterations \
         (alpha = {alpha:.6e}, phi = {phi:.6e}, |s| = {s_norm:.6e})"
    )]
    SecularNonConvergence {
        iters: usize,
        alpha: f64,
        phi: f64,
        s_norm: f64,
    },

    #[error("curvature model is indefinite (v'Qv = {probe_value:.6e} on a probe)")]
    IndefiniteCurvature { probe_value: f64 },

    #[error("Krylov solver did not converge: relative residual {residual:.3e} after {iters} iterations")]
    KrylovNonConvergence { residual: f64, iters: usize },
}
