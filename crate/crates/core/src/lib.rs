//! Differentiable embedded-grid elasticity with sparse surface constraints for estimating material
//! parameters of deforming objects from depth observations.

pub mod adjoint;
pub mod commands;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod fem;
pub mod gradcheck;
pub mod grid;
pub mod math;
pub mod observation;
pub mod optimize;
pub mod scene;
pub mod units;

pub use error::{Error, Result};
