//! Compares adjoint gradients of the bar scene with central finite differences, with and without corotation.

use ssc::gradcheck::compare;
use ssc::scene;

fn main() -> ssc::Result<()> {
    for corotation in [false, true] {
        let mut config = scene::bar();
        config.simulation.corotation = corotation;
        let sim = config.simulator()?;
        let obs = config.synthesize(&sim)?;
        let objective = config.objective(sim, obs)?;
        let report = compare(&objective, &config.initial_parameters(), &config.gradcheck)?;
        println!("corotation {corotation}, cost {:.6e}", report.cost);
        for r in &report.rows {
            println!("  {:<20} adjoint {:>+14.6e} central {:>+14.6e} rel.err {:.1e}", r.parameter.to_string(), r.adjoint, r.central, r.central_error);
        }
    }
    Ok(())
}
