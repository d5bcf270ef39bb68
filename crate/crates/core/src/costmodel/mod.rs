//! Local cost functions, their convexity constants and the centralized
//! minimizer used as the reference optimum.

mod dual;
mod expr;

pub use dual::Dual;
pub use expr::{BinOp, CostExpr, DomainError, Func, Node, ParseError};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::policy::NumericPolicy;

/// Default validity box for sampled convexity constants.
pub const DEFAULT_BOX: (f64, f64) = (-10.0, 10.0);
/// Default number of sample points for convexity estimation.
pub const DEFAULT_SAMPLES: usize = 2000;
const SAMPLE_SEED: u64 = 0x00c0_57f0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("quadratic weight is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("quadratic weight is not symmetric")]
    NotSymmetric,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid domain box: {0}")]
    InvalidBox(String),
    #[error("at least 100 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("non-convexity detected: monotonicity quotient {quotient} between {x:?} and {y:?}")]
    NonConvexDetected { quotient: f64, x: Vec<f64>, y: Vec<f64> },
    #[error("no cost functions supplied")]
    Empty,
    #[error("minimizer did not converge after {iterations} iterations (gradient norm {grad_norm})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Estimated,
    /// Sampling found a negative monotonicity quotient; `m` holds that quotient.
    NonConvex,
}

/// Strong-convexity constant `m` and gradient-Lipschitz constant `big_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityConstants {
    pub m: f64,
    pub big_m: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// `yᵀ Q y + bᵀ y + c`
    Quadratic {
        q: DMatrix<f64>,
        b: DVector<f64>,
        c: f64,
    },
    /// Scalar expression in `y`.
    Expression(CostExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    kind: CostKind,
    constants: ConvexityConstants,
    domain_box: Vec<(f64, f64)>,
}

impl CostFunction {
    pub fn quadratic(q: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self, CostError> {
        let dim = q.nrows();
        if q.ncols() != dim {
            return Err(CostError::DimensionMismatch {
                expected: dim,
                got: q.ncols(),
            });
        }
        if b.len() != dim {
            return Err(CostError::DimensionMismatch {
                expected: dim,
                got: b.len(),
            });
        }
        let scale = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > 1e-12 * scale {
            return Err(CostError::NotSymmetric);
        }
        let eig = SymmetricEigen::new(q.clone()).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo <= 0.0 {
            return Err(CostError::NotPositiveDefinite(lo));
        }
        Ok(Self {
            kind: CostKind::Quadratic { q, b, c },
            constants: ConvexityConstants {
                m: 2.0 * lo,
                big_m: 2.0 * hi,
                provenance: Provenance::Analytic,
            },
            domain_box: vec![DEFAULT_BOX; dim],
        })
    }

    /// Wraps a scalar expression; constants are sampled over `domain`.
    /// A cost that is not convex on the box is still accepted, with
    /// provenance [`Provenance::NonConvex`].
    pub fn expression(
        expr: CostExpr,
        domain: (f64, f64),
        samples: usize,
        policy: &NumericPolicy,
    ) -> Result<Self, CostError> {
        let mut cost = Self {
            kind: CostKind::Expression(expr),
            constants: ConvexityConstants {
                m: 0.0,
                big_m: 0.0,
                provenance: Provenance::Estimated,
            },
            domain_box: vec![domain],
        };
        let stats = sample_monotonicity(&cost, &[domain], samples)?;
        cost.constants = if stats.min_quotient < -policy.convexity_tol {
            ConvexityConstants {
                m: stats.min_quotient,
                big_m: stats.max_lipschitz,
                provenance: Provenance::NonConvex,
            }
        } else {
            ConvexityConstants {
                m: stats.min_quotient.max(0.0),
                big_m: stats.max_lipschitz.max(stats.min_quotient.max(0.0)),
                provenance: Provenance::Estimated,
            }
        };
        Ok(cost)
    }

    pub fn parse(
        text: &str,
        domain: (f64, f64),
        samples: usize,
        policy: &NumericPolicy,
    ) -> Result<Self, CostError> {
        Self::expression(CostExpr::parse(text)?, domain, samples, policy)
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn constants(&self) -> ConvexityConstants {
        self.constants
    }

    pub fn domain_box(&self) -> &[(f64, f64)] {
        &self.domain_box
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            CostKind::Quadratic { q, .. } => q.nrows(),
            CostKind::Expression(_) => 1,
        }
    }

    fn check_dim(&self, y: &DVector<f64>) -> Result<(), CostError> {
        if y.len() != self.dim() {
            return Err(CostError::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, y: &DVector<f64>) -> Result<f64, CostError> {
        self.check_dim(y)?;
        match &self.kind {
            CostKind::Quadratic { q, b, c } => Ok(y.dot(&(q * y)) + b.dot(y) + c),
            CostKind::Expression(e) => Ok(e.value(y[0])?),
        }
    }

    /// True-calculus gradient: `(Q + Qᵀ) y + b` for quadratics.
    pub fn gradient(&self, y: &DVector<f64>) -> Result<DVector<f64>, CostError> {
        self.check_dim(y)?;
        match &self.kind {
            CostKind::Quadratic { q, b, .. } => Ok(q * y + q.transpose() * y + b),
            CostKind::Expression(e) => Ok(DVector::from_element(1, e.derivative(y[0])?)),
        }
    }

    /// Exact for quadratics; central difference of the dual-number
    /// derivative for expressions.
    pub fn hessian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>, CostError> {
        self.check_dim(y)?;
        match &self.kind {
            CostKind::Quadratic { q, .. } => Ok(q + q.transpose()),
            CostKind::Expression(e) => {
                let h = 1e-5 * (1.0 + y[0].abs());
                let up = e.derivative(y[0] + h)?;
                let down = e.derivative(y[0] - h)?;
                Ok(DMatrix::from_element(1, 1, (up - down) / (2.0 * h)))
            }
        }
    }
}

/// Extremes of the sampled monotonicity and Lipschitz quotients.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityStats {
    pub min_quotient: f64,
    pub max_lipschitz: f64,
    pub witness: (Vec<f64>, Vec<f64>),
}

/// Samples `(x−y)ᵀ(∇f(x)−∇f(y))/‖x−y‖²` and `‖∇f(x)−∇f(y)‖/‖x−y‖` over the
/// box. Scalar costs use an even grid (adjacent and mirrored pairs) plus
/// random pairs; vector costs use seeded random points.
pub fn sample_monotonicity(
    cost: &CostFunction,
    domain: &[(f64, f64)],
    samples: usize,
) -> Result<MonotonicityStats, CostError> {
    let dim = cost.dim();
    if domain.len() != dim {
        return Err(CostError::DimensionMismatch {
            expected: dim,
            got: domain.len(),
        });
    }
    for &(lo, hi) in domain {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CostError::InvalidBox(format!("[{lo}, {hi}]")));
        }
    }
    if samples < 100 {
        return Err(CostError::TooFewSamples(samples));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let points: Vec<DVector<f64>> = if dim == 1 {
        let (lo, hi) = domain[0];
        (0..samples)
            .map(|k| {
                let t = k as f64 / (samples - 1) as f64;
                DVector::from_element(1, lo + t * (hi - lo))
            })
            .collect()
    } else {
        (0..samples)
            .map(|_| DVector::from_iterator(dim, domain.iter().map(|&(lo, hi)| rng.random_range(lo..=hi))))
            .collect()
    };
    let grads: Vec<DVector<f64>> = points
        .iter()
        .map(|p| cost.gradient(p))
        .collect::<Result<_, _>>()?;

    let mut pairs: Vec<(usize, usize)> = (0..samples - 1).map(|k| (k, k + 1)).collect();
    pairs.extend((0..samples / 2).map(|k| (k, samples - 1 - k)));
    pairs.extend((0..samples).map(|_| (rng.random_range(0..samples), rng.random_range(0..samples))));

    let mut stats = MonotonicityStats {
        min_quotient: f64::INFINITY,
        max_lipschitz: 0.0,
        witness: (Vec::new(), Vec::new()),
    };
    for (i, j) in pairs {
        let dx = &points[i] - &points[j];
        let n2 = dx.norm_squared();
        if n2 == 0.0 {
            continue;
        }
        let dg = &grads[i] - &grads[j];
        let quotient = dx.dot(&dg) / n2;
        let lipschitz = dg.norm() / n2.sqrt();
        if quotient < stats.min_quotient {
            stats.min_quotient = quotient;
            stats.witness = (
                points[i].iter().copied().collect(),
                points[j].iter().copied().collect(),
            );
        }
        stats.max_lipschitz = stats.max_lipschitz.max(lipschitz);
    }
    Ok(stats)
}

/// Sampled `(m, M)` over the box; fails when a pair violates monotonicity.
/// A cost that is convex but not strongly convex reports `m` near zero and
/// leaves the rejection to the caller (see [`NumericPolicy::m_floor`]).
pub fn estimate_convexity_constants(
    cost: &CostFunction,
    domain: &[(f64, f64)],
    samples: usize,
    policy: &NumericPolicy,
) -> Result<ConvexityConstants, CostError> {
    let stats = sample_monotonicity(cost, domain, samples)?;
    if stats.min_quotient < -policy.convexity_tol {
        return Err(CostError::NonConvexDetected {
            quotient: stats.min_quotient,
            x: stats.witness.0,
            y: stats.witness.1,
        });
    }
    let m = stats.min_quotient.max(0.0);
    Ok(ConvexityConstants {
        m,
        big_m: stats.max_lipschitz.max(m),
        provenance: Provenance::Estimated,
    })
}

fn aggregate_gradient(costs: &[CostFunction], y: &DVector<f64>) -> Result<DVector<f64>, CostError> {
    let mut g = DVector::zeros(y.len());
    for c in costs {
        g += c.gradient(y)?;
    }
    Ok(g)
}

fn aggregate_value(costs: &[CostFunction], y: &DVector<f64>) -> Result<f64, CostError> {
    costs.iter().map(|c| c.value(y)).sum()
}

/// Minimizer of `Σ f_i` by damped Newton on the aggregate gradient with a
/// gradient-descent fallback. Stops when `‖Σ ∇f_i‖ ≤ 1e-10`.
pub fn centralized_minimizer(costs: &[CostFunction]) -> Result<DVector<f64>, CostError> {
    const TOL: f64 = 1e-10;
    const MAX_ITER: usize = 500;
    let first = costs.first().ok_or(CostError::Empty)?;
    let dim = first.dim();
    if let Some(bad) = costs.iter().find(|c| c.dim() != dim) {
        return Err(CostError::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }

    let mut y = DVector::zeros(dim);
    let mut g = aggregate_gradient(costs, &y)?;
    for _ in 0..MAX_ITER {
        let gnorm = g.norm();
        if gnorm <= TOL {
            return Ok(y);
        }
        let mut hess = DMatrix::zeros(dim, dim);
        for c in costs {
            hess += c.hessian(&y)?;
        }
        let hess = (&hess + hess.transpose()) * 0.5;

        // Newton step, backtracking on the gradient norm
        let mut accepted = false;
        if let Some(chol) = hess.clone().cholesky() {
            let dir = -chol.solve(&g);
            let mut t = 1.0;
            for _ in 0..40 {
                let cand = &y + &dir * t;
                if let Ok(gc) = aggregate_gradient(costs, &cand) {
                    if gc.norm() < gnorm {
                        y = cand;
                        g = gc;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        if accepted {
            continue;
        }

        // Armijo gradient step on the aggregate value
        let f0 = aggregate_value(costs, &y)?;
        let mut t = 1.0 / hess.amax().max(1.0);
        let mut moved = false;
        for _ in 0..60 {
            let cand = &y - &g * t;
            if let Ok(fc) = aggregate_value(costs, &cand) {
                if fc <= f0 - 1e-4 * t * gnorm * gnorm {
                    g = aggregate_gradient(costs, &cand)?;
                    y = cand;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            return Err(CostError::NoConvergence {
                iterations: MAX_ITER,
                grad_norm: gnorm,
            });
        }
    }
    let grad_norm = g.norm();
    if grad_norm <= TOL {
        Ok(y)
    } else {
        Err(CostError::NoConvergence {
            iterations: MAX_ITER,
            grad_norm,
        })
    }
}
