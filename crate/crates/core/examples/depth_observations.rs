//! Renders noisy depth observations of the swaying tree every tenth step.

use ssc::scene;

fn main() -> ssc::Result<()> {
    let config = scene::tree();
    let sim = config.simulator()?;
    let obs = config.synthesize(&sim)?;
    for f in &obs.frames {
        let mean = f.points.iter().fold(ssc::math::Vec3::zeros(), |a, p| a + p) / f.points.len().max(1) as f64;
        println!("step {:>3}: {:>4} points, mean {:.3?}", f.t, f.points.len(), mean.as_slice());
    }
    println!("{} points in total", obs.num_points());
    Ok(())
}
