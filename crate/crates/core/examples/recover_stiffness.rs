//! Recovers the torus's Young's modulus from a few perturbed starts.

use ssc::optimize::run_batch;
use ssc::scene;

fn main() -> ssc::Result<()> {
    let mut config = scene::torus();
    config.batch.runs = 3;
    config.optimizer.iterations = 15;
    let sim = config.simulator()?;
    let obs = config.synthesize(&sim)?;
    let objective = config.objective(sim, obs)?;
    let result = run_batch(&objective, &config.initial_parameters(), &config.optimizer, &config.batch)?;
    for run in result.successful() {
        println!(
            "run {}: k {:>8.1} -> {:>7.1}, cost {:.3e} -> {:.3e}",
            run.id,
            run.initial.youngs_modulus,
            run.final_params.youngs_modulus,
            run.trace[0].cost,
            run.final_cost
        );
    }
    println!("ground truth k = {}", config.parameters.youngs_modulus);
    Ok(())
}
