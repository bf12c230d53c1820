//! Builds the embedded simulation grid of a torus and round-trips its signed distance field.

use ssc::grid::{DirichletRegion, Shape, SignedDistanceGrid, SimulationGrid};

fn main() -> ssc::Result<()> {
    let shape = Shape::Torus { center: [0.0, 0.0, 3.0], major_radius: 4.5, minor_radius: 1.8 };
    let sdf = SignedDistanceGrid::from_shape(&shape, 1.0, 2)?;
    println!("lattice {:?} nodes, spacing {}", sdf.dims(), sdf.spacing());

    let grid = SimulationGrid::new(sdf.clone(), &DirichletRegion::None)?;
    println!("{} active cells, {} of them cut by the surface", grid.num_cells(), grid.surface_cells().len());
    println!("{} free nodes, centroid {:.3?}", grid.num_dofs(), grid.centroid().as_slice());

    let path = std::env::temp_dir().join("torus.sdf");
    sdf.save(&path)?;
    let back = SignedDistanceGrid::load(&path)?;
    println!("round trip through {} is exact: {}", path.display(), back.values() == sdf.values());
    Ok(())
}
