//! Closed-loop assembly, fixed-step integration and convergence metrics.

mod closed_loop;
mod integrate;
mod metrics;

pub use closed_loop::{ClosedLoop, InitialConditions, Layout, Scenario};
pub use integrate::{integrate, Trajectory};
pub use metrics::{compute_metrics, log_linear_fit, settling_time, DecayFit, Metrics};

use thiserror::Error;

use crate::controller::ControllerError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("step must be positive and no larger than the horizon (h = {step}, T = {horizon})")]
    InvalidStep { step: f64, horizon: f64 },
    #[error("non-finite state at t = {time}")]
    NumericalBlowup { time: f64 },
    #[error("at t = {time}: {source}")]
    Controller {
        time: f64,
        #[source]
        source: ControllerError,
    },
}
