//! Time integration with Newmark's scheme, Rayleigh damping and penalty contact.

pub mod collision;
pub mod newmark;
pub mod simulate;
pub mod solver;

pub use collision::{collision_force, collision_force_rate, extrapolate_collision_force, plane_normal, GroundPlane};
pub use newmark::{newmark_step, rayleigh_damping, SimState};
pub use simulate::{
    simulate_forward, Contact, ContactSettings, SimulationSettings, Simulator, StepRecord, TrajectoryRecord,
};
pub use solver::{solve_linear, SolveStats, SolverOptions};
