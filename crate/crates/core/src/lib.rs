//! Numerical workbench for wave propagation outside a trapping obstacle.

pub mod control;
pub mod data;
pub mod domain;
pub mod energy_decay;
pub mod propagator;
pub mod rays;
pub mod scenario;
pub mod workbench;
pub mod error;
pub mod geometry;

pub use error::{Error, Result};
