//! Evaluates the sparse surface cost of the ball at the ground truth and at softer and stiffer materials.

use ssc::adjoint::Param;
use ssc::cost::write_match_report;
use ssc::scene;

fn main() -> ssc::Result<()> {
    let config = scene::ball();
    let sim = config.simulator()?;
    let obs = config.synthesize(&sim)?;
    let objective = config.objective(sim, obs)?;
    let k = config.parameters.youngs_modulus;
    for factor in [0.5, 0.9, 1.0, 1.1, 2.0] {
        let cost = objective.cost(&config.parameters.with(Param::YoungsModulus, k * factor))?;
        println!("k = {:>7.1}: cost {cost:.6e}", k * factor);
    }
    let eval = objective.evaluate(&config.parameters.with(Param::YoungsModulus, 2.0 * k))?;
    let mut report = Vec::new();
    write_match_report(&eval.frames, &mut report)?;
    let text = String::from_utf8_lossy(&report);
    println!("\nper-frame matches at k = {}:", 2.0 * k);
    for line in text.lines().take(8) {
        println!("{line}");
    }
    Ok(())
}
