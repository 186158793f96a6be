//! Stability analysis of flock solutions in first- and second-order swarming
//! particle models.
//!
//! The crate simulates the aggregation model `dx_i = -sum_j grad W(x_i - x_j)`
//! and the self-propelled model with propulsion `alpha v - beta v |v|^2`,
//! linearises both around flock solutions, and checks the spectral
//! conditions under which a flock is locally stable.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod hypotheses;
pub mod jacobians;
pub mod linalg;
pub mod potentials;

pub use error::{Error, Result};
