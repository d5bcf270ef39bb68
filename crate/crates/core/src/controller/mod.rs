//! Per-agent control laws and the coupling-gain feasibility checker.
//!
//! Each agent integrates `ρ_i`, `v_i`, `z_i` (and `x̂_i` with output
//! feedback) from its own cost gradient and messages `(y_j, z_j)` received
//! from in-neighbors. Nothing else about the network enters these functions.

mod gain_check;
mod law;

pub use gain_check::{check_gain_conditions, suggest_gains, GainCheck, GainCheckInputs, GainMargins, SuggestedGains};
pub use law::{
    init_controller_states, output_feedback_derivatives, state_feedback_derivatives, AgentController,
    AgentInit, NeighborMessage, OutputFeedbackRates, StateFeedbackRates,
};

use nalgebra::DVector;
use thiserror::Error;

use crate::costmodel::CostError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("agent {agent}: own eigenvector estimate z_i^i = {value:e} fell below the guard")]
    ZGuardViolated { agent: usize, value: f64 },
    #[error("agent {agent}: v(0) must be omitted or zero")]
    ConfigOverridesV0 { agent: usize },
    #[error("agent {agent}: output feedback requires an observer gain and estimate")]
    MissingObserver { agent: usize },
    #[error("coupling gains must be positive, got gamma1 = {gamma1}, gamma2 = {gamma2}")]
    NonPositiveGains { gamma1: f64, gamma2: f64 },
    #[error("gain constants must be positive: {0}")]
    InvalidConstants(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("agent {agent}: {source}")]
    Cost {
        agent: usize,
        #[source]
        source: CostError,
    },
}

/// Which of the two control laws is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlMode {
    /// Full state measurement.
    #[default]
    State,
    /// Observer-based output feedback.
    Output,
}

impl ControlMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::State => "state",
            Self::Output => "output",
        }
    }
}

impl std::str::FromStr for ControlMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state" => Ok(Self::State),
            "output" => Ok(Self::Output),
            other => Err(format!("unknown controller mode '{other}' (expected state|output)")),
        }
    }
}

/// Coupling gains `γ₁`, `γ₂` shared by every agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingGains {
    gamma1: f64,
    gamma2: f64,
}

impl CouplingGains {
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self, ControllerError> {
        if !(gamma1 > 0.0 && gamma2 > 0.0 && gamma1.is_finite() && gamma2.is_finite()) {
            return Err(ControllerError::NonPositiveGains { gamma1, gamma2 });
        }
        Ok(Self { gamma1, gamma2 })
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }
}

/// Per-agent auxiliary state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub rho: DVector<f64>,
    pub v: DVector<f64>,
    /// Estimate of the left eigenvector; component `i` belongs to this agent.
    pub z: DVector<f64>,
    pub xhat: Option<DVector<f64>>,
}
