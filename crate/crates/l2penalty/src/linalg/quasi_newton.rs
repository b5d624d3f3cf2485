use nalgebra::DVector;

use crate::error::Error;

const SKIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum QnKind {
    Lbfgs,
    Lsr1,
}

/// Rank-one term `sign · u uᵀ` of the limited-memory operator.
#[derive(Debug, Clone)]
struct RankOne {
    u: DVector<f64>,
    sign: f64,
}

/// Limited-memory Hessian approximation with identity seed.
///
/// `apply` realizes `v ↦ B·v` without materializing `B`; the rank-one
/// terms are rebuilt from the stored pairs whenever the memory changes.
#[derive(Debug, Clone)]
pub struct QuasiNewtonOp {
    pub kind: QnKind,
    pub memory: usize,
    pairs: Vec<(DVector<f64>, DVector<f64>)>,
    terms: Vec<RankOne>,
    pub norm_estimate: f64,
    dim: usize,
}

impl QuasiNewtonOp {
    pub fn new(kind: QnKind, dim: usize, memory: usize) -> Self {
        QuasiNewtonOp {
            kind,
            memory,
            pairs: Vec::new(),
            terms: Vec::new(),
            norm_estimate: 1.0,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for t in &self.terms {
            out += (t.sign * t.u.dot(v)) * &t.u;
        }
        out
    }

    /// Rebuilds the rank-one terms from the stored pairs.
    ///
    /// LBFGS: B ← B − (Bs)(Bs)ᵀ/(sᵀBs) + yyᵀ/(yᵀs).
    /// LSR1:  B ← B + rrᵀ/(rᵀs), r = y − Bs.
    fn rebuild(&mut self) {
        self.terms.clear();
        let pairs = self.pairs.clone();
        for (s, y) in &pairs {
            match self.kind {
                QnKind::Lbfgs => {
                    let bs = self.apply(s);
                    let sbs = s.dot(&bs);
                    let ys = y.dot(s);
                    if sbs <= 0.0 || ys <= 0.0 {
                        continue;
                    }
                    self.terms.push(RankOne {
                        u: &bs / sbs.sqrt(),
                        sign: -1.0,
                    });
                    self.terms.push(RankOne {
                        u: y / ys.sqrt(),
                        sign: 1.0,
                    });
                }
                QnKind::Lsr1 => {
                    let r = y - self.apply(s);
                    let rs = r.dot(s);
                    if rs.abs() <= SKIP_TOL * s.norm() * r.norm() {
                        continue;
                    }
                    self.terms.push(RankOne {
                        u: &r / rs.abs().sqrt(),
                        sign: rs.signum(),
                    });
                }
            }
        }
        self.refresh_norm_estimate();
    }

    /// Power iteration on `apply`; 10 steps with early exit on a
    /// relative change below 1e-2.
    fn refresh_norm_estimate(&mut self) {
        if self.terms.is_empty() {
            self.norm_estimate = 1.0;
            return;
        }
        let n = self.dim;
        let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * (i as f64) / (n as f64));
        v /= v.norm();
        let mut estimate = 1.0f64;
        for _ in 0..10 {
            let bv = self.apply(&v);
            let nrm = bv.norm();
            if nrm <= f64::MIN_POSITIVE {
                break;
            }
            let change = (nrm - estimate).abs() / estimate.max(1.0);
            estimate = estimate.max(nrm);
            v = bv / nrm;
            if change < 1e-2 {
                break;
            }
        }
        self.norm_estimate = estimate;
    }
}

/// Offers the pair `(s, y)` to the operator, applying the curvature and
/// redundancy skip rules, and returns the updated operator.
pub fn qn_update(
    op: &QuasiNewtonOp,
    s: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<QuasiNewtonOp, Error> {
    if s.len() != op.dim || y.len() != op.dim {
        return Err(Error::DimensionMismatch {
            expected: op.dim,
            got: if s.len() != op.dim { s.len() } else { y.len() },
        });
    }
    let mut next = op.clone();
    let accept = match op.kind {
        QnKind::Lbfgs => s.dot(y) > SKIP_TOL * s.norm() * y.norm(),
        QnKind::Lsr1 => {
            let r = y - op.apply(s);
            r.dot(s).abs() > SKIP_TOL * s.norm() * r.norm()
        }
    };
    if !accept {
        return Ok(next);
    }
    next.pairs.push((s.clone(), y.clone()));
    if next.pairs.len() > next.memory {
        next.pairs.remove(0);
    }
    next.rebuild();
    Ok(next)
}
