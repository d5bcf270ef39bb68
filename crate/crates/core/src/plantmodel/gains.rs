use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{AgentPlant, PlantError};
use crate::linalg::{self, eigenvalues, spectral_abscissa};
use crate::policy::NumericPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HurwitzTarget {
    /// `A − B K`
    Feedback,
    /// `A − H C`
    Observer,
}

impl fmt::Display for HurwitzTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Feedback => f.write_str("closed-loop A - BK"),
            Self::Observer => f.write_str("observer A - HC"),
        }
    }
}

/// Validated feedback gain `K` and optional observer gain `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k: DMatrix<f64>,
    pub h: Option<DMatrix<f64>>,
    pub spectral_abscissa_closed: f64,
    pub spectral_abscissa_observer: Option<f64>,
}

fn require_hurwitz(
    m: &DMatrix<f64>,
    target: HurwitzTarget,
    policy: &NumericPolicy,
) -> Result<f64, PlantError> {
    let eig = eigenvalues(m);
    if let Some(bad) = eig
        .iter()
        .filter(|l| l.re >= -policy.hurwitz_margin)
        .max_by(|a, b| a.re.total_cmp(&b.re))
    {
        return Err(PlantError::NotHurwitz {
            target,
            eigenvalue: *bad,
        });
    }
    Ok(eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn validate_gains(
    plant: &AgentPlant,
    k: DMatrix<f64>,
    h: Option<DMatrix<f64>>,
    policy: &NumericPolicy,
) -> Result<GainSet, PlantError> {
    let (n, p, q) = (plant.states(), plant.inputs(), plant.outputs());
    if k.shape() != (p, n) {
        return Err(PlantError::Shape(format!(
            "K must be {p}x{n}, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    if let Some(h) = &h {
        if h.shape() != (n, q) {
            return Err(PlantError::Shape(format!(
                "H must be {n}x{q}, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
    }
    let closed = plant.a() - plant.b() * &k;
    let spectral_abscissa_closed = require_hurwitz(&closed, HurwitzTarget::Feedback, policy)?;
    let spectral_abscissa_observer = match &h {
        Some(h) => Some(require_hurwitz(
            &(plant.a() - h * plant.c()),
            HurwitzTarget::Observer,
            policy,
        )?),
        None => None,
    };
    Ok(GainSet {
        k,
        h,
        spectral_abscissa_closed,
        spectral_abscissa_observer,
    })
}

/// Hautus test at every eigenvalue with non-negative real part:
/// `rank [A − λI, B] = n`. Returns the first offending mode.
fn uncontrollable_unstable_mode(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    policy: &NumericPolicy,
) -> Option<Complex64> {
    let n = a.nrows();
    let p = b.ncols();
    for lambda in eigenvalues(a) {
        if lambda.re < -policy.hurwitz_margin {
            continue;
        }
        let mut pencil = DMatrix::<Complex64>::zeros(n, n + p);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex64::new(a[(i, j)], 0.0);
            }
            pencil[(i, i)] -= lambda;
            for j in 0..p {
                pencil[(i, n + j)] = Complex64::new(b[(i, j)], 0.0);
            }
        }
        if linalg::numerical_rank_complex(&pencil, policy.rank_rel) < n {
            return Some(lambda);
        }
    }
    None
}

pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>, policy: &NumericPolicy) -> bool {
    uncontrollable_unstable_mode(a, b, policy).is_none()
}

pub fn is_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>, policy: &NumericPolicy) -> bool {
    uncontrollable_unstable_mode(&a.transpose(), &c.transpose(), policy).is_none()
}

/// Initial stabilizer: with `β` above every eigenvalue's real part, solve
/// `(A + βI) W + W (A + βI)ᵀ = B Bᵀ`; then `K₀ = Bᵀ W⁻¹` makes `A − B K₀`
/// Hurwitz whenever `W ≻ 0`. Uncontrollable (but stable) modes make `W`
/// singular, so a small diagonal shift is tried before giving up.
fn shifted_inverse_stabilizer(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    policy: &NumericPolicy,
) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if spectral_abscissa(a) < -policy.hurwitz_margin {
        return Some(DMatrix::zeros(b.ncols(), n));
    }
    let beta = a.norm() + 1.0;
    let shifted = a + DMatrix::<f64>::identity(n, n) * beta;
    let w = linalg::solve_lyapunov(&shifted, &(b * b.transpose()))?;
    let scale = w.amax().max(f64::MIN_POSITIVE);
    for shift in [0.0, 1e-10, 1e-8, 1e-6, 1e-4] {
        let reg = &w + DMatrix::<f64>::identity(n, n) * (shift * scale);
        if let Some(inv) = reg.try_inverse() {
            let k = b.transpose() * inv;
            if spectral_abscissa(&(a - b * &k)) < -policy.hurwitz_margin {
                return Some(k);
            }
        }
    }
    None
}

/// Stabilizing solution of `Aᵀ P + P A − P B Bᵀ P + I = 0` by Newton–Kleinman,
/// returning `K = Bᵀ P`.
pub fn synthesize_stabilizing_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    policy: &NumericPolicy,
) -> Result<DMatrix<f64>, PlantError> {
    let n = a.nrows();
    if let Some(mode) = uncontrollable_unstable_mode(a, b, policy) {
        return Err(PlantError::NotStabilizable(mode));
    }
    let mut k = shifted_inverse_stabilizer(a, b, policy).ok_or(PlantError::RiccatiDiverged)?;
    let identity = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let closed = a - b * &k;
        // (A − BK)ᵀ P + P (A − BK) = −(I + KᵀK)
        let rhs = -(&identity + k.transpose() * &k);
        let p = linalg::solve_lyapunov(&closed.transpose(), &rhs).ok_or(PlantError::RiccatiDiverged)?;
        let next = b.transpose() * &p;
        let change = (&next - &k).norm();
        k = next;
        if change <= 1e-13 * (1.0 + k.norm()) {
            break;
        }
    }
    if spectral_abscissa(&(a - b * &k)) >= -policy.hurwitz_margin || k.iter().any(|v| !v.is_finite()) {
        return Err(PlantError::RiccatiDiverged);
    }
    Ok(k)
}

/// Observer gain `H` from the dual Riccati problem on `(Aᵀ, Cᵀ)`.
pub fn synthesize_observer_gain(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    policy: &NumericPolicy,
) -> Result<DMatrix<f64>, PlantError> {
    match synthesize_stabilizing_gain(&a.transpose(), &c.transpose(), policy) {
        Ok(k) => Ok(k.transpose()),
        Err(PlantError::NotStabilizable(mode)) => Err(PlantError::NotDetectable(mode)),
        Err(e) => Err(e),
    }
}
