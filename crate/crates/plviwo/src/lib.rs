//! Simulation, file formats and command-line front end for the PL-VIWO
//! point/line visual-inertial-wheel odometry core.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sim;

pub use config::ConfigError;
pub use io::IoError;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("estimator: {0}")]
    Core(#[from] plviwo_core::Error),
}
