//! SEIRD metapopulation epidemic modeling driven by mobility-derived contact
//! networks: the stochastic model, an extended Kalman filter likelihood with
//! exact gradients, parameter estimation, contact inference from POI visit
//! counts, POI clustering, and data handling.

pub mod clustering;
pub mod data;
pub mod ekf;
pub mod error;
pub mod estimator;
pub mod mobility;
pub mod model;

pub use clustering::Membership;
pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
