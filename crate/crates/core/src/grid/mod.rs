//! Embedded hexahedral discretization of a signed distance field.

pub mod quadrature;
pub mod sdf;
pub mod simgrid;

pub use quadrature::{cell_boundary_weights, cell_volume_weights, surface_triangles, BoundaryQuadrature};
pub use sdf::{read_grid, write_grid, GridFile, Shape, SignedDistanceGrid};
pub use simgrid::{DirichletRegion, SimulationGrid, SurfaceCell};
