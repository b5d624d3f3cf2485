//! Exact ℓ2-penalty solver for equality-constrained nonlinear programs.
//!
//! The constrained problem `min f(x) s.t. c(x) = 0` is solved through a
//! sequence of nonsmooth penalized problems `min f(x) + τ‖c(x)‖₂`.
//! Each penalized problem is handled by an adaptive proximal-gradient
//! method (R2) or a proximal quasi-Newton variant (R2N), and every
//! proximal step is evaluated in closed form through a dual trust-region
//! problem solved by a secular-equation Newton iteration.

pub mod error;
pub mod linalg;
pub mod models;
pub mod penalty;
pub mod problem;
pub mod prox;
pub mod subsolvers;

pub use error::Error;
pub use penalty::{kkt_residual, solve, OuterConfig, SolveReport, SolveStatus};
pub use problem::{registry_get, registry_names, EvalCounters, Problem};
pub use subsolvers::{InnerConfig, InnerResult, InnerStatus, QnKind};
