use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ssc::adjoint::ParameterSet;
use ssc::commands;
use ssc::scene::SceneConfig;

/// Material parameter estimation from sparse depth observations.
#[derive(Parser)]
#[command(name = "ssc", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and write the per-step summary and displacement fields.
    Forward {
        config: PathBuf,
        /// Output directory (default: the config's output directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulate the initial instead of the ground-truth parameters.
        #[arg(long)]
        initial: bool,
        /// Skip writing per-step displacement grids.
        #[arg(long)]
        no_fields: bool,
    },
    /// Render synthetic depth observations.
    Observe {
        config: PathBuf,
        /// Directory written by `forward`; simulates the ground truth when absent.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Observation file (default: <output>/observations.txt).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare adjoint gradients with finite differences.
    Gradcheck {
        config: PathBuf,
        #[arg(long)]
        observations: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the batch optimization.
    Optimize {
        config: PathBuf,
        #[arg(long)]
        observations: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the best run's displacement fields.
        #[arg(long)]
        fields: bool,
    },
    /// Print parameters in SI units using the config's calibration block.
    ConvertUnits {
        config: PathBuf,
        /// Parameter set JSON (for example best_parameters.json); default: the config's parameters.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Print a built-in scene config (torus, ball, tree, bar).
    Preset { name: String },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<ssc::Error>() {
        Some(ssc::Error::AllRunsFailed) => 3,
        Some(err) if err.is_numerical() => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let load = |p: &PathBuf| SceneConfig::load(p).with_context(|| format!("loading {}", p.display()));
    match cli.command {
        Command::Forward { config, out, initial, no_fields } => {
            let c = load(&config)?;
            let out = out.unwrap_or_else(|| c.output_dir());
            let p = if initial { c.initial_parameters() } else { c.parameters.clone() };
            let traj = commands::forward(&c, &p, &out, !no_fields)?;
            println!("simulated {} steps into {}", traj.num_steps(), out.display());
        }
        Command::Observe { config, trajectory, out } => {
            let c = load(&config)?;
            let out = out.unwrap_or_else(|| c.output_dir().join("observations.txt"));
            let obs = commands::observe(&c, trajectory.as_deref(), &out)?;
            println!("{} frames, {} points written to {}", obs.frames.len(), obs.num_points(), out.display());
        }
        Command::Gradcheck { config, observations, out } => {
            let c = load(&config)?;
            let out = out.unwrap_or_else(|| c.output_dir());
            let (report, sweep) = commands::gradcheck(&c, observations.as_deref(), &out)?;
            println!("{:>20} {:>14} {:>14} {:>14} {:>10}", "parameter", "adjoint", "central fd", "forward fd", "rel.err");
            for r in &report.rows {
                println!(
                    "{:>20} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.2e}",
                    r.parameter.to_string(),
                    r.adjoint,
                    r.central,
                    r.forward,
                    r.central_error
                );
            }
            if let Some(s) = sweep {
                let (ea, ef) = s.sign_errors();
                let (fa, ff) = s.sign_flips();
                println!("sweep over {} points: sign errors adjoint {ea}, forward fd {ef}; sign flips adjoint {fa}, forward fd {ff}", s.rows.len());
            }
        }
        Command::Optimize { config, observations, out, fields } => {
            let c = load(&config)?;
            let out = out.unwrap_or_else(|| c.output_dir());
            let result = commands::optimize(&c, observations.as_deref(), &out, fields)?;
            let best = result.best_run();
            let failed = result.runs.iter().filter(|r| r.outcome.is_err()).count();
            println!("best run {} with cost {:.6e} ({} runs, {failed} failed)", best.id, best.final_cost, result.runs.len());
            for &q in &c.optimizer.parameters {
                println!("  {q} = {:.6e}", best.final_params.get(q));
            }
        }
        Command::ConvertUnits { config, params } => {
            let c = load(&config)?;
            let p: ParameterSet = match params {
                Some(f) => serde_json::from_reader(std::fs::File::open(&f).with_context(|| format!("opening {}", f.display()))?)
                    .map_err(ssc::Error::from)?,
                None => c.parameters.clone(),
            };
            let (_, table) = commands::convert_units(&c, &p)?;
            print!("{table}");
        }
        Command::Preset { name } => {
            let c = ssc::scene::preset(&name)
                .ok_or_else(|| ssc::Error::Config(format!("unknown preset '{name}', expected one of {:?}", ssc::scene::PRESETS)))?;
            println!("{}", c.to_json()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = ["warn", "info", "debug"][cli.verbose.min(2) as usize];
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
