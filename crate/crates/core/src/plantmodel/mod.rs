//! Heterogeneous LTI agents `ẋ = A x + B u`, `y = C x`: regulation-equation
//! solvability and solution, and feedback / observer gain handling.

mod gains;
mod regulation;

pub use gains::{
    is_detectable, is_stabilizable, synthesize_observer_gain, synthesize_stabilizing_gain,
    validate_gains, GainSet, HurwitzTarget,
};
pub use regulation::{check_regulation_rank, solve_regulation_equations, RankCheck, SolutionTriplet, TripletResiduals};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("regulation equations unsolvable: least-squares residual {residual:e}")]
    Unsolvable { residual: f64 },
    #[error("{target} matrix is not Hurwitz: eigenvalue {eigenvalue}")]
    NotHurwitz {
        target: HurwitzTarget,
        eigenvalue: Complex64,
    },
    #[error("(A, B) is not stabilizable: uncontrollable mode {0}")]
    NotStabilizable(Complex64),
    #[error("(A, C) is not detectable: unobservable mode {0}")]
    NotDetectable(Complex64),
    #[error("Riccati iteration failed to converge")]
    RiccatiDiverged,
}

/// One agent's `(A, B, C)` with dimensions `n × n`, `n × p`, `q × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl AgentPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, PlantError> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(PlantError::Shape(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(PlantError::Shape(format!(
                "B must be {n}xp with p >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(PlantError::Shape(format!(
                "C must be qx{n} with q >= 1, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// State dimension `n_i`.
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `p_i`.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension `q`.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}
