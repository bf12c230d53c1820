//! Reverse-mode differentiation of the simulation and cost pipeline.

pub mod collision;
pub mod objective;
pub mod params;
pub mod ssc;
pub mod sweep;

pub use collision::{adjoint_contact, ContactAdjoint};
pub use objective::{
    finite_difference_gradient, write_gradient_csv, Evaluation, FdScheme, GradientReport, Objective, ObjectiveOptions,
};
pub use params::{Param, ParamGradient, ParameterSet};
pub use ssc::{adjoint_ssc, FrameAdjoint};
pub use sweep::{adjoint_rayleigh, reverse_sweep, RayleighAdjoint, SweepOptions, SweepResult};
