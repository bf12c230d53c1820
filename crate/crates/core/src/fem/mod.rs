//! Finite element operators on the embedded grid.

pub mod assembly;
pub mod corotation;
pub mod element;
pub mod material;
pub mod sparse;

pub use assembly::{assemble_global, Assembler};
pub use corotation::{compute_corotation, deformation_gradient, polar_rotation, ElementRotation};
pub use element::{element_mass, element_stiffness, nitsche_dirichlet_terms, Mat24, NitscheParts};
pub use material::{lame_from_young_poisson, MaterialParams};
pub use sparse::BlockedSparseMatrix;
