use nalgebra::{DMatrix, DVector};

use super::{AgentPlant, PlantError};
use crate::linalg::{self, kron, vec};
use crate::policy::NumericPolicy;

/// Outcome of the rank test on `[[C B, 0], [-A B, B]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankCheck {
    pub ok: bool,
    pub rank: usize,
    pub required: usize,
}

pub fn check_regulation_rank(plant: &AgentPlant, policy: &NumericPolicy) -> RankCheck {
    let (n, p, q) = (plant.states(), plant.inputs(), plant.outputs());
    let mut block = DMatrix::zeros(q + n, 2 * p);
    block
        .view_mut((0, 0), (q, p))
        .copy_from(&(plant.c() * plant.b()));
    block
        .view_mut((q, 0), (n, p))
        .copy_from(&-(plant.a() * plant.b()));
    block.view_mut((q, p), (n, p)).copy_from(plant.b());
    let rank = linalg::numerical_rank(&block, policy.rank_rel);
    RankCheck {
        ok: rank == n + q,
        rank,
        required: n + q,
    }
}

/// `(Υ, Φ, Ψ)` with `C Ψ = I`, `B Φ = A Ψ`, `B Υ = Ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTriplet {
    pub upsilon: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    /// Largest of the three Frobenius residuals.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletResiduals {
    /// `‖C Ψ − I‖_F`
    pub output: f64,
    /// `‖B Φ − A Ψ‖_F`
    pub drift: f64,
    /// `‖B Υ − Ψ‖_F`
    pub input: f64,
}

impl TripletResiduals {
    pub fn max(&self) -> f64 {
        self.output.max(self.drift).max(self.input)
    }
}

impl SolutionTriplet {
    /// Builds a triplet from given matrices, checking shapes and recording
    /// the residual against `plant`.
    pub fn from_parts(
        plant: &AgentPlant,
        upsilon: DMatrix<f64>,
        phi: DMatrix<f64>,
        psi: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        let (n, p, q) = (plant.states(), plant.inputs(), plant.outputs());
        for (name, m, rows) in [("Upsilon", &upsilon, p), ("Phi", &phi, p), ("Psi", &psi, n)] {
            if m.shape() != (rows, q) {
                return Err(PlantError::Shape(format!(
                    "{name} must be {rows}x{q}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let mut t = Self {
            upsilon,
            phi,
            psi,
            residual: 0.0,
        };
        t.residual = t.residuals(plant).max();
        Ok(t)
    }

    pub fn residuals(&self, plant: &AgentPlant) -> TripletResiduals {
        let q = plant.outputs();
        TripletResiduals {
            output: (plant.c() * &self.psi - DMatrix::<f64>::identity(q, q)).norm(),
            drift: (plant.b() * &self.phi - plant.a() * &self.psi).norm(),
            input: (plant.b() * &self.upsilon - &self.psi).norm(),
        }
    }
}

/// Minimum-norm solution of the vectorized regulation equations in the
/// unknowns `(vec Ψ, vec Φ, vec Υ)`, using `vec(E F G) = (Gᵀ ⊗ E) vec F`.
pub fn solve_regulation_equations(
    plant: &AgentPlant,
    policy: &NumericPolicy,
) -> Result<SolutionTriplet, PlantError> {
    let (n, p, q) = (plant.states(), plant.inputs(), plant.outputs());
    let iq = DMatrix::<f64>::identity(q, q);
    let (nq, pq) = (n * q, p * q);
    let rows = q * q + 2 * nq;
    let cols = nq + 2 * pq;

    let mut system = DMatrix::zeros(rows, cols);
    // C Ψ = I
    system
        .view_mut((0, 0), (q * q, nq))
        .copy_from(&kron(&iq, plant.c()));
    // B Φ − A Ψ = 0
    system
        .view_mut((q * q, 0), (nq, nq))
        .copy_from(&-kron(&iq, plant.a()));
    system
        .view_mut((q * q, nq), (nq, pq))
        .copy_from(&kron(&iq, plant.b()));
    // B Υ − Ψ = 0
    system
        .view_mut((q * q + nq, 0), (nq, nq))
        .copy_from(&-DMatrix::<f64>::identity(nq, nq));
    system
        .view_mut((q * q + nq, nq + pq), (nq, pq))
        .copy_from(&kron(&iq, plant.b()));

    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, q * q).copy_from(&vec(&iq));

    let sol = linalg::min_norm_solve(&system, &rhs, policy.rank_rel);
    let lsq_residual = (&system * &sol - &rhs).norm();
    if lsq_residual > policy.triplet_residual_max {
        return Err(PlantError::Unsolvable {
            residual: lsq_residual,
        });
    }
    let psi = linalg::unvec(&sol.as_slice()[..nq], n);
    let phi = linalg::unvec(&sol.as_slice()[nq..nq + pq], p);
    let upsilon = linalg::unvec(&sol.as_slice()[nq + pq..], p);
    SolutionTriplet::from_parts(plant, upsilon, phi, psi)
}
