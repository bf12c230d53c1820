//! Calibrates a teddy-sized ellipsoid and converts virtual parameters to SI units.

use ssc::adjoint::ParameterSet;
use ssc::grid::{DirichletRegion, Shape, SignedDistanceGrid, SimulationGrid};
use ssc::math::Vec3;
use ssc::units::{calibrate, si_report, CalibrationInput};

fn main() -> ssc::Result<()> {
    let shape = Shape::Ellipsoid { center: [0.0; 3], radii: [12.0, 8.0, 6.5] };
    let grid = SimulationGrid::new(SignedDistanceGrid::from_shape(&shape, 1.0, 2)?, &DirichletRegion::None)?;
    let input = CalibrationInput { size: 0.33, mass: 0.256, framerate: 60.0 };
    let cal = calibrate(&grid, &input, 1.0)?;
    let params = ParameterSet {
        gravity: Vec3::new(0.0, 0.0, -400.0),
        youngs_modulus: 8.0,
        rayleigh_mass: 0.24,
        rayleigh_stiffness: 0.027,
        ..Default::default()
    };
    print!("{}", si_report(&cal, &params, false));
    Ok(())
}
