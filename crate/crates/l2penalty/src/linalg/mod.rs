//! Dense factorization and iterative-solver kernels.

mod minres;
mod qr;
mod quasi_newton;

pub use minres::{krylov_symmetric_solve, KrylovResult};
pub use qr::{solve_least_norm, solve_normal, stacked_qr, StackedQR};
pub use quasi_newton::{qn_update, QnKind, QuasiNewtonOp};
