//! Writes every built-in scene as a JSON config and loads it back.

use ssc::scene::{preset, SceneConfig, PRESETS};

fn main() -> ssc::Result<()> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("ssc-configs"));
    std::fs::create_dir_all(&dir)?;
    for name in PRESETS {
        let config = preset(name).expect("built-in preset");
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, config.to_json()?)?;
        let back = SceneConfig::load(&path)?;
        println!("{}: {} cells, {} steps of {} s", path.display(), back.grid()?.num_cells(), back.simulation.steps, back.simulation.dt);
    }
    Ok(())
}
