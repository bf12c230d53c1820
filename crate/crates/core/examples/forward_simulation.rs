//! Drops the ball onto the ground and prints its lowest point and largest displacement per step.

use ssc::scene;

fn main() -> ssc::Result<()> {
    let config = scene::ball();
    let sim = config.simulator()?;
    let traj = sim.simulate(&config.parameters, true)?;
    let rest = sim.grid.rest_positions();
    println!("{:>4} {:>10} {:>10} {:>6}", "step", "lowest z", "max |u|", "cg");
    for (s, step) in traj.states.iter().skip(1).zip(&traj.steps) {
        let low = s.u.iter().zip(rest).map(|(u, x)| u.z + x.z).fold(f64::INFINITY, f64::min);
        let umax = s.u.iter().map(|u| u.norm()).fold(0.0, f64::max);
        println!("{:>4} {low:>10.4} {umax:>10.4} {:>6}", s.t, step.solve.iterations);
    }
    Ok(())
}
