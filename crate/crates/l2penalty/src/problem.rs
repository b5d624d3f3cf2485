//! Equality-constrained NLP abstraction and a registry of built-in test
//! problems.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::Error;

type ObjFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type ConsFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// An equality-constrained NLP: `min f(x) s.t. c(x) = 0` with `m ≤ n`.
pub struct Problem {
    pub n: usize,
    pub m: usize,
    pub x0: DVector<f64>,
    eval_f: ObjFn,
    grad_f: GradFn,
    eval_c: ConsFn,
    jac: JacFn,
}

impl Problem {
    pub fn new(
        n: usize,
        m: usize,
        x0: DVector<f64>,
        eval_f: ObjFn,
        grad_f: GradFn,
        eval_c: ConsFn,
        jac: JacFn,
    ) -> Self {
        assert!(m <= n, "m <= n required");
        assert_eq!(x0.len(), n);
        Problem {
            n,
            m,
            x0,
            eval_f,
            grad_f,
            eval_c,
            jac,
        }
    }

    pub fn f(&self, x: &DVector<f64>) -> f64 {
        (self.eval_f)(x)
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad_f)(x)
    }

    pub fn c(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.eval_c)(x)
    }

    pub fn jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jac)(x)
    }

    /// Builds the linearly-constrained QP `min ½xᵀQx + gᵀx s.t. Ax + b = 0`.
    pub fn from_qp(
        q: DMatrix<f64>,
        g: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        x0: DVector<f64>,
    ) -> Result<Self, Error> {
        let n = g.len();
        let m = b.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::ShapeError {
                expected: n,
                got: q.nrows(),
            });
        }
        if a.nrows() != m || a.ncols() != n || x0.len() != n {
            return Err(Error::ShapeError {
                expected: n,
                got: a.ncols(),
            });
        }
        let q2 = q.clone();
        let g2 = g.clone();
        let a2 = a.clone();
        let a3 = a.clone();
        Ok(Problem::new(
            n,
            m,
            x0,
            Box::new(move |x| 0.5 * x.dot(&(&q * x)) + g.dot(x)),
            Box::new(move |x| &q2 * x + &g2),
            Box::new(move |x| &a2 * x + &b),
            Box::new(move |_| a3.clone()),
        ))
    }
}

/// JSON schema for linearly-constrained QPs.
#[derive(Debug, Deserialize)]
pub struct QpJson {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub x0: Vec<f64>,
}

impl QpJson {
    pub fn into_problem(self) -> Result<Problem, Error> {
        let n = self.g.len();
        let m = self.b.len();
        let flat_q: Vec<f64> = self.q.iter().flatten().copied().collect();
        if flat_q.len() != n * n {
            return Err(Error::ShapeError {
                expected: n * n,
                got: flat_q.len(),
            });
        }
        let flat_a: Vec<f64> = self.a.iter().flatten().copied().collect();
        if flat_a.len() != m * n {
            return Err(Error::ShapeError {
                expected: m * n,
                got: flat_a.len(),
            });
        }
        Problem::from_qp(
            DMatrix::from_row_slice(n, n, &flat_q),
            DVector::from_vec(self.g),
            DMatrix::from_row_slice(m, n, &flat_a),
            DVector::from_vec(self.b),
            DVector::from_vec(self.x0),
        )
    }
}

/// Counts of callback evaluations over a solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct EvalCounters {
    pub n_f: u64,
    pub n_grad: u64,
    pub n_c: u64,
    pub n_jac: u64,
}

/// Wraps a problem so every callback invocation ticks the counters.
pub struct Evaluator<'a> {
    pub problem: &'a Problem,
    pub counters: EvalCounters,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a Problem) -> Self {
        Evaluator {
            problem,
            counters: EvalCounters::default(),
        }
    }

    pub fn f(&mut self, x: &DVector<f64>) -> f64 {
        self.counters.n_f += 1;
        self.problem.f(x)
    }

    pub fn grad(&mut self, x: &DVector<f64>) -> DVector<f64> {
        self.counters.n_grad += 1;
        self.problem.grad(x)
    }

    pub fn c(&mut self, x: &DVector<f64>) -> DVector<f64> {
        self.counters.n_c += 1;
        self.problem.c(x)
    }

    pub fn jac(&mut self, x: &DVector<f64>) -> DMatrix<f64> {
        self.counters.n_jac += 1;
        self.problem.jac(x)
    }
}

/// A mismatch between an analytic derivative and its central-difference
/// estimate.
#[derive(Debug, Clone)]
pub struct DerivativeViolation {
    /// (row, col): row is usize::MAX for the objective gradient.
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub finite_diff: f64,
    pub rel_error: f64,
}

/// Checks `grad_f` and `jac` against central finite differences of
/// `eval_f` and `eval_c` at `x`.
pub fn verify_derivatives(
    p: &Problem,
    x: &DVector<f64>,
    tol: f64,
) -> Result<Vec<DerivativeViolation>, Error> {
    assert!(tol > 0.0);
    if x.len() != p.n {
        return Err(Error::ShapeError {
            expected: p.n,
            got: x.len(),
        });
    }
    let g = p.grad(x);
    if g.len() != p.n {
        return Err(Error::ShapeError {
            expected: p.n,
            got: g.len(),
        });
    }
    let j = p.jac(x);
    if j.nrows() != p.m || j.ncols() != p.n {
        return Err(Error::ShapeError {
            expected: p.m,
            got: j.nrows(),
        });
    }

    let mut violations = Vec::new();
    let base_h = f64::EPSILON.cbrt();
    for i in 0..p.n {
        let h = base_h * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;

        let fd_g = (p.f(&xp) - p.f(&xm)) / (2.0 * h);
        let rel = (g[i] - fd_g).abs() / (1.0 + g[i].abs().max(fd_g.abs()));
        if rel > tol {
            violations.push(DerivativeViolation {
                row: usize::MAX,
                col: i,
                analytic: g[i],
                finite_diff: fd_g,
                rel_error: rel,
            });
        }

        let cp = p.c(&xp);
        let cm = p.c(&xm);
        if cp.len() != p.m || cm.len() != p.m {
            return Err(Error::ShapeError {
                expected: p.m,
                got: cp.len(),
            });
        }
        for r in 0..p.m {
            let fd_j = (cp[r] - cm[r]) / (2.0 * h);
            let rel = (j[(r, i)] - fd_j).abs() / (1.0 + j[(r, i)].abs().max(fd_j.abs()));
            if rel > tol {
                violations.push(DerivativeViolation {
                    row: r,
                    col: i,
                    analytic: j[(r, i)],
                    finite_diff: fd_j,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(violations)
}

fn vec(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

fn hs6() -> Problem {
    Problem::new(
        2,
        1,
        vec(&[-1.2, 1.0]),
        Box::new(|x| (1.0 - x[0]).powi(2)),
        Box::new(|x| vec(&[-2.0 * (1.0 - x[0]), 0.0])),
        Box::new(|x| vec(&[10.0 * (x[1] - x[0] * x[0])])),
        Box::new(|x| DMatrix::from_row_slice(1, 2, &[-20.0 * x[0], 10.0])),
    )
}

fn hs7() -> Problem {
    Problem::new(
        2,
        1,
        vec(&[2.0, 2.0]),
        Box::new(|x| (1.0 + x[0] * x[0]).ln() - x[1]),
        Box::new(|x| vec(&[2.0 * x[0] / (1.0 + x[0] * x[0]), -1.0])),
        Box::new(|x| vec(&[(1.0 + x[0] * x[0]).powi(2) + x[1] * x[1] - 10.0])),
        Box::new(|x| {
            DMatrix::from_row_slice(1, 2, &[4.0 * x[0] * (1.0 + x[0] * x[0]), 2.0 * x[1]])
        }),
    )
}

fn hs26() -> Problem {
    Problem::new(
        3,
        1,
        vec(&[-2.6, 2.0, 2.0]),
        Box::new(|x| (x[0] - x[1]).powi(2) + (x[1] - x[2]).powi(4)),
        Box::new(|x| {
            vec(&[
                2.0 * (x[0] - x[1]),
                -2.0 * (x[0] - x[1]) + 4.0 * (x[1] - x[2]).powi(3),
                -4.0 * (x[1] - x[2]).powi(3),
            ])
        }),
        Box::new(|x| vec(&[(1.0 + x[1] * x[1]) * x[0] + x[2].powi(4) - 3.0])),
        Box::new(|x| {
            DMatrix::from_row_slice(
                1,
                3,
                &[1.0 + x[1] * x[1], 2.0 * x[0] * x[1], 4.0 * x[2].powi(3)],
            )
        }),
    )
}

fn hs27() -> Problem {
    Problem::new(
        3,
        1,
        vec(&[2.0, 2.0, 2.0]),
        Box::new(|x| 0.01 * (x[0] - 1.0).powi(2) + (x[1] - x[0] * x[0]).powi(2)),
        Box::new(|x| {
            vec(&[
                0.02 * (x[0] - 1.0) - 4.0 * x[0] * (x[1] - x[0] * x[0]),
                2.0 * (x[1] - x[0] * x[0]),
                0.0,
            ])
        }),
        Box::new(|x| vec(&[x[0] + x[2] * x[2] + 1.0])),
        Box::new(|x| DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 2.0 * x[2]])),
    )
}

fn hs40() -> Problem {
    Problem::new(
        4,
        3,
        vec(&[0.8, 0.8, 0.8, 0.8]),
        Box::new(|x| -x[0] * x[1] * x[2] * x[3]),
        Box::new(|x| {
            vec(&[
                -x[1] * x[2] * x[3],
                -x[0] * x[2] * x[3],
                -x[0] * x[1] * x[3],
                -x[0] * x[1] * x[2],
            ])
        }),
        Box::new(|x| {
            vec(&[
                x[0].powi(3) + x[1] * x[1] - 1.0,
                x[0] * x[0] * x[3] - x[2],
                x[3] * x[3] - x[1],
            ])
        }),
        Box::new(|x| {
            DMatrix::from_row_slice(
                3,
                4,
                &[
                    3.0 * x[0] * x[0],
                    2.0 * x[1],
                    0.0,
                    0.0,
                    2.0 * x[0] * x[3],
                    0.0,
                    -1.0,
                    x[0] * x[0],
                    0.0,
                    -1.0,
                    0.0,
                    2.0 * x[3],
                ],
            )
        }),
    )
}

fn hs42() -> Problem {
    Problem::new(
        4,
        2,
        vec(&[1.0, 1.0, 1.0, 1.0]),
        Box::new(|x| {
            (x[0] - 1.0).powi(2)
                + (x[1] - 2.0).powi(2)
                + (x[2] - 3.0).powi(2)
                + (x[3] - 4.0).powi(2)
        }),
        Box::new(|x| {
            vec(&[
                2.0 * (x[0] - 1.0),
                2.0 * (x[1] - 2.0),
                2.0 * (x[2] - 3.0),
                2.0 * (x[3] - 4.0),
            ])
        }),
        Box::new(|x| vec(&[x[0] - 2.0, x[2] * x[2] + x[3] * x[3] - 2.0])),
        Box::new(|x| {
            DMatrix::from_row_slice(
                2,
                4,
                &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0 * x[2], 2.0 * x[3]],
            )
        }),
    )
}

fn hs78() -> Problem {
    Problem::new(
        5,
        3,
        vec(&[-2.0, 1.5, 2.0, -1.0, -1.0]),
        Box::new(|x| x[0] * x[1] * x[2] * x[3] * x[4]),
        Box::new(|x| {
            vec(&[
                x[1] * x[2] * x[3] * x[4],
                x[0] * x[2] * x[3] * x[4],
                x[0] * x[1] * x[3] * x[4],
                x[0] * x[1] * x[2] * x[4],
                x[0] * x[1] * x[2] * x[3],
            ])
        }),
        Box::new(|x| {
            vec(&[
                x.iter().map(|v| v * v).sum::<f64>() - 10.0,
                x[1] * x[2] - 5.0 * x[3] * x[4],
                x[0].powi(3) + x[1].powi(3) + 1.0,
            ])
        }),
        Box::new(|x| {
            DMatrix::from_row_slice(
                3,
                5,
                &[
                    2.0 * x[0],
                    2.0 * x[1],
                    2.0 * x[2],
                    2.0 * x[3],
                    2.0 * x[4],
                    0.0,
                    x[2],
                    x[1],
                    -5.0 * x[4],
                    -5.0 * x[3],
                    3.0 * x[0] * x[0],
                    3.0 * x[1] * x[1],
                    0.0,
                    0.0,
                    0.0,
                ],
            )
        }),
    )
}

fn hs79() -> Problem {
    let sqrt2 = 2.0_f64.sqrt();
    Problem::new(
        5,
        3,
        vec(&[2.0, 2.0, 2.0, 2.0, 2.0]),
        Box::new(|x| {
            (x[0] - 1.0).powi(2)
                + (x[0] - x[1]).powi(2)
                + (x[1] - x[2]).powi(2)
                + (x[2] - x[3]).powi(4)
                + (x[3] - x[4]).powi(4)
        }),
        Box::new(|x| {
            vec(&[
                2.0 * (x[0] - 1.0) + 2.0 * (x[0] - x[1]),
                -2.0 * (x[0] - x[1]) + 2.0 * (x[1] - x[2]),
                -2.0 * (x[1] - x[2]) + 4.0 * (x[2] - x[3]).powi(3),
                -4.0 * (x[2] - x[3]).powi(3) + 4.0 * (x[3] - x[4]).powi(3),
                -4.0 * (x[3] - x[4]).powi(3),
            ])
        }),
        Box::new(move |x| {
            vec(&[
                x[0] + x[1] * x[1] + x[2].powi(3) - 2.0 - 3.0 * sqrt2,
                x[1] - x[2] * x[2] + x[3] + 2.0 - 2.0 * sqrt2,
                x[0] * x[4] - 2.0,
            ])
        }),
        Box::new(|x| {
            DMatrix::from_row_slice(
                3,
                5,
                &[
                    1.0,
                    2.0 * x[1],
                    3.0 * x[2] * x[2],
                    0.0,
                    0.0,
                    0.0,
                    1.0,
                    -2.0 * x[2],
                    1.0,
                    0.0,
                    x[4],
                    0.0,
                    0.0,
                    0.0,
                    x[0],
                ],
            )
        }),
    )
}

/// Convex QP with known multiplier: min ½‖x‖² s.t. x₁ − 1 = 0.
/// Solution x* = (1, 0, 0), multiplier of unit norm.
fn qp_known_multiplier() -> Problem {
    Problem::from_qp(
        DMatrix::identity(3, 3),
        DVector::zeros(3),
        DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        vec(&[-1.0]),
        vec(&[-1.0, 2.0, 0.5]),
    )
    .expect("static QP data")
}

fn linear_quadratic() -> Problem {
    Problem::from_qp(
        DMatrix::from_diagonal(&vec(&[1.0, 2.0, 3.0, 4.0])),
        vec(&[1.0, -1.0, 0.0, 2.0]),
        DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]),
        vec(&[-1.0, 0.0]),
        vec(&[0.0, 0.0, 1.0, -1.0]),
    )
    .expect("static QP data")
}

/// Duplicated constraint rows: the Jacobian never has full row rank.
fn rank_deficient() -> Problem {
    let target = vec(&[2.0, 0.0, 1.0]);
    let t2 = target.clone();
    Problem::new(
        3,
        2,
        vec(&[0.0, 0.0, 0.0]),
        Box::new(move |x| 0.5 * (x - &target).norm_squared()),
        Box::new(move |x| x - &t2),
        Box::new(|x| {
            let r = x[0] + x[1] - 1.0;
            vec(&[r, r])
        }),
        Box::new(|_| DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0])),
    )
}

/// Infeasible by construction: c(x) = x₁² + 1 has no root.
fn infeasible_circle() -> Problem {
    Problem::new(
        1,
        1,
        vec(&[1.0]),
        Box::new(|_| 0.0),
        Box::new(|_| vec(&[0.0])),
        Box::new(|x| vec(&[x[0] * x[0] + 1.0])),
        Box::new(|x| DMatrix::from_row_slice(1, 1, &[2.0 * x[0]])),
    )
}

const REGISTRY: &[(&str, fn() -> Problem)] = &[
    ("qp-known-multiplier", qp_known_multiplier),
    ("linear-quadratic", linear_quadratic),
    ("hs6", hs6),
    ("hs7", hs7),
    ("hs26", hs26),
    ("hs27", hs27),
    ("hs40", hs40),
    ("hs42", hs42),
    ("hs78", hs78),
    ("hs79", hs79),
    ("rank-deficient", rank_deficient),
    ("infeasible-circle", infeasible_circle),
];

/// Names of all built-in problems, in registry order.
pub fn registry_names() -> Vec<String> {
    REGISTRY.iter().map(|(n, _)| n.to_string()).collect()
}

/// Names of the built-in problems that admit feasible points.
pub fn feasible_registry_names() -> Vec<String> {
    REGISTRY
        .iter()
        .map(|(n, _)| n.to_string())
        .filter(|n| n != "infeasible-circle")
        .collect()
}

pub fn registry_get(name: &str) -> Result<Problem, Error> {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, build)| build())
        .ok_or_else(|| Error::UnknownProblem {
            name: name.to_string(),
            available: registry_names(),
        })
}
