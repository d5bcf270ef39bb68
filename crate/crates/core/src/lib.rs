//! Distributed optimal output consensus for heterogeneous linear agents over
//! weight-unbalanced directed graphs.
//!
//! Every agent `i` runs `ẋ_i = A_i x_i + B_i u_i`, `y_i = C_i x_i` and owns a
//! private convex cost `f_i`. The controllers in [`controller`] steer all
//! outputs to the minimizer of `Σ f_i` using only neighbor outputs and a
//! running estimate `z_i` of the Laplacian's left null vector.

pub mod cli;
pub mod controller;
pub mod costmodel;
pub mod linalg;
pub mod netgraph;
pub mod plantmodel;
pub mod policy;
pub mod scenario;
pub mod simulator;

pub use policy::NumericPolicy;
