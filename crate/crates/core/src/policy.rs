//! Numeric tolerances shared by every module.

/// One record holding every tolerance the library uses, so a caller can
/// tighten or relax them in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    /// Absolute threshold for structural zeros (null-space tests, symmetry).
    pub structural_zero: f64,
    /// Singular values below `rank_rel * sigma_max` count as zero.
    pub rank_rel: f64,
    /// Eigenvalues must have real part below `-hurwitz_margin`.
    pub hurwitz_margin: f64,
    /// Smallest admissible own-component `z_i^i` during simulation.
    pub z_guard: f64,
    /// Largest admissible residual of the regulation equations.
    pub triplet_residual_max: f64,
    /// Estimated strong-convexity constants below this are rejected by the gain checker.
    pub m_floor: f64,
    /// Negative monotonicity quotients above `-convexity_tol` are treated as zero.
    pub convexity_tol: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            structural_zero: 1e-10,
            rank_rel: 1e-9,
            hurwitz_margin: 1e-9,
            z_guard: 1e-9,
            triplet_residual_max: 1e-8,
            m_floor: 1e-6,
            convexity_tol: 1e-9,
        }
    }
}
