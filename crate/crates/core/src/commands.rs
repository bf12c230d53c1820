//! The end-to-end commands behind the `ssc` binary, writing their results into a directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::adjoint::ParameterSet;
use crate::dynamics::{SimState, Simulator, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::gradcheck::{compare, sweep, write_gradcheck_csv, write_sweep_csv, GradcheckReport, SweepReport};
use crate::observation::{read_observations, write_observations, ObservationSequence};
use crate::optimize::{run_batch, write_run_csv, BatchResult, BatchSummary};
use crate::scene::SceneConfig;
use crate::units::{calibrate, si_report, UnitCalibration};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn field_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("fields").join(format!("u_{t:04}.grid"))
}

/// Simulates `params`, writing `summary.csv` and, when `fields` is set, one displacement grid per step.
pub fn forward(config: &SceneConfig, params: &ParameterSet, out: &Path, fields: bool) -> Result<TrajectoryRecord> {
    let sim = config.simulator()?;
    let traj = sim.simulate(params, false)?;
    write_trajectory(&sim, params, &traj, out, fields)?;
    Ok(traj)
}

fn write_trajectory(sim: &Simulator, params: &ParameterSet, traj: &TrajectoryRecord, out: &Path, fields: bool) -> Result<()> {
    sim.write_summary(params, traj, create(&out.join("summary.csv"))?)?;
    if fields {
        for s in &traj.states {
            sim.write_displacement(s, create(&field_path(out, s.t))?)?;
        }
    }
    Ok(())
}

/// Reads the displacement grids of steps `0..=T` written by [`forward`].
pub fn load_trajectory(sim: &Simulator, dir: &Path) -> Result<TrajectoryRecord> {
    let n = sim.num_dofs();
    let states = (0..=sim.settings.steps)
        .map(|t| {
            let path = field_path(dir, t);
            let file = File::open(&path)
                .map_err(|e| Error::Config(format!("missing trajectory field {}: {e}", path.display())))?;
            Ok(SimState { u: sim.read_displacement(file)?, v: vec![Default::default(); n], t })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryRecord { states, steps: Vec::new() })
}

/// Renders observations of a stored trajectory, or of a fresh ground-truth simulation without one.
pub fn observe(config: &SceneConfig, trajectory: Option<&Path>, out: &Path) -> Result<ObservationSequence> {
    let sim = config.simulator()?;
    let traj = match trajectory {
        Some(dir) => load_trajectory(&sim, dir)?,
        None => sim.simulate(&config.parameters, false)?,
    };
    let obs = config.observe(&sim, &traj)?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    write_observations(&obs, out)?;
    Ok(obs)
}

fn observations(config: &SceneConfig, sim: &Simulator, file: Option<&Path>) -> Result<ObservationSequence> {
    match file {
        Some(f) => read_observations(f),
        None => config.synthesize(sim),
    }
}

/// Adjoint against finite differences at the initial parameters, plus the configured sweep.
/// Writes `gradcheck.csv` and `sweep.csv`.
pub fn gradcheck(
    config: &SceneConfig,
    observations_file: Option<&Path>,
    out: &Path,
) -> Result<(GradcheckReport, Option<SweepReport>)> {
    let sim = config.simulator()?;
    let obs = observations(config, &sim, observations_file)?;
    let objective = config.objective(sim, obs)?;
    let p = config.initial_parameters();
    let report = compare(&objective, &p, &config.gradcheck)?;
    write_gradcheck_csv(&report, create(&out.join("gradcheck.csv"))?)?;
    let sweep_report = match &config.gradcheck.sweep {
        Some(s) => {
            let step = config.gradcheck.forward_step_for(s.parameter);
            let r = sweep(&objective, &p, s, step, config.parameters.get(s.parameter))?;
            write_sweep_csv(&r, create(&out.join("sweep.csv"))?)?;
            Some(r)
        }
        None => None,
    };
    Ok((report, sweep_report))
}

/// Batch optimization from the initial parameters. Writes `runs/run_<id>.csv`, `summary.json`,
/// `best_parameters.json` and the best run's `best/summary.csv`.
pub fn optimize(config: &SceneConfig, observations_file: Option<&Path>, out: &Path, fields: bool) -> Result<BatchResult> {
    let sim = config.simulator()?;
    let obs = observations(config, &sim, observations_file)?;
    let objective = config.objective(sim.clone(), obs)?;
    let result = run_batch(&objective, &config.initial_parameters(), &config.optimizer, &config.batch)?;
    for run in result.successful() {
        write_run_csv(run, &config.optimizer.parameters, create(&out.join("runs").join(format!("run_{:03}.csv", run.id)))?)?;
    }
    let summary = BatchSummary::new(&result, &config.optimizer);
    serde_json::to_writer_pretty(create(&out.join("summary.json"))?, &summary)?;
    let best = &result.best_run().final_params;
    serde_json::to_writer_pretty(create(&out.join("best_parameters.json"))?, best)?;
    let traj = sim.simulate(best, false)?;
    write_trajectory(&sim, best, &traj, &out.join("best"), fields)?;
    Ok(result)
}

/// Calibration from the config's calibration block and the SI table for `params`.
pub fn convert_units(config: &SceneConfig, params: &ParameterSet) -> Result<(UnitCalibration, String)> {
    let input = config
        .calibration
        .ok_or_else(|| Error::Config("the scene has no calibration block".into()))?;
    let grid = config.grid()?;
    let cal = calibrate(&grid, &input, params.mass_density)?;
    let with_ground = config.simulation.ground.is_some();
    let report = si_report(&cal, params, with_ground);
    Ok((cal, report))
}
