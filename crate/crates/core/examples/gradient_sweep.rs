//! Sweeps the tree's Young's modulus and checks which gradient estimates point towards the ground truth.

use ssc::adjoint::Param;
use ssc::gradcheck::{sweep, SweepConfig};
use ssc::scene;

fn main() -> ssc::Result<()> {
    let config = scene::tree();
    let sim = config.simulator()?;
    let obs = config.synthesize(&sim)?;
    let objective = config.objective(sim, obs)?;
    let truth = config.parameters.youngs_modulus;
    let s = SweepConfig { parameter: Param::YoungsModulus, min: 1250.0, max: 20000.0, points: 8, log_spacing: true };
    let r = sweep(&objective, &config.parameters, &s, 5.0, truth)?;
    println!("{:>9} {:>12} {:>12} {:>12}", "k", "cost", "adjoint", "forward fd");
    for row in &r.rows {
        println!("{:>9.1} {:>12.5e} {:>+12.4e} {:>+12.4e}", row.value, row.cost, row.adjoint, row.forward);
    }
    let (a, f) = r.sign_errors();
    println!("wrong signs: adjoint {a}, forward differences {f} (of {})", r.judged());
    Ok(())
}
