use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{Param, ParamGradient, ParameterSet};
use super::ssc::adjoint_ssc;
use super::sweep::{reverse_sweep, SweepOptions};
use crate::cost::{frame_cost, DeformedCells, ExtendedDisplacementField, ExtensionBand, ExtensionOptions, FrameMatches, TieBreak};
use crate::dynamics::{Simulator, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::observation::ObservationSequence;

/// Cost evaluation settings shared by the forward and reverse passes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveOptions {
    pub extension: ExtensionOptions,
    pub tie_break: TieBreak,
    /// Treat element rotations as constants in the reverse pass.
    pub frozen_rotations: bool,
    /// Relative tolerance of the backward solves; defaults to a tenth of the forward one.
    pub adjoint_tolerance: Option<f64>,
}

/// Everything the forward pass produces.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub trajectory: TrajectoryRecord,
    pub fields: BTreeMap<usize, ExtendedDisplacementField>,
    pub frames: Vec<FrameMatches>,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub cost: f64,
    pub gradient: ParamGradient,
    /// `‖û⁽ᵗ⁾‖` for `t = 1..=T`.
    pub step_adjoint_norms: Vec<f64>,
    /// Matched points skipped because of a singular cell Jacobian.
    pub dropped_points: usize,
}

/// The sparse surface constraint objective `J(p)` of one scene.
#[derive(Clone, Debug)]
pub struct Objective {
    pub sim: Simulator,
    pub observations: ObservationSequence,
    pub options: ObjectiveOptions,
    band: ExtensionBand,
}

impl Objective {
    pub fn new(sim: Simulator, observations: ObservationSequence, options: ObjectiveOptions) -> Result<Self> {
        observations.validate()?;
        options.extension.validate()?;
        if let Some(t) = observations.last_timestep() {
            if t > sim.settings.steps {
                return Err(Error::MissingFrame(t));
            }
        }
        let band = ExtensionBand::new(&sim.grid, options.extension.phi_max);
        Ok(Self { sim, observations, options, band })
    }

    pub fn band(&self) -> &ExtensionBand {
        &self.band
    }

    fn evaluate_with_cells(&self, p: &ParameterSet) -> Result<(Evaluation, Vec<DeformedCells>)> {
        let trajectory = self.sim.simulate(p, true)?;
        let grid = &self.sim.grid;
        let per_frame: Vec<(ExtendedDisplacementField, DeformedCells, FrameMatches)> = self
            .observations
            .frames
            .par_iter()
            .map(|frame| {
                let field = self.band.extend(grid, &trajectory.state(frame.t).u, &self.options.extension)?;
                let cells = DeformedCells::new(grid, &field);
                let fm = frame_cost(frame, &cells, self.options.tie_break);
                Ok((field, cells, fm))
            })
            .collect::<Result<_>>()?;
        let mut fields = BTreeMap::new();
        let mut all_cells = Vec::with_capacity(per_frame.len());
        let mut frames = Vec::with_capacity(per_frame.len());
        for (field, cells, fm) in per_frame {
            fields.insert(fm.t, field);
            all_cells.push(cells);
            frames.push(fm);
        }
        let cost = frames.iter().map(|f| f.cost).sum();
        Ok((Evaluation { trajectory, fields, frames, cost }, all_cells))
    }

    pub fn evaluate(&self, p: &ParameterSet) -> Result<Evaluation> {
        self.evaluate_with_cells(p).map(|(e, _)| e)
    }

    pub fn cost(&self, p: &ParameterSet) -> Result<f64> {
        self.evaluate(p).map(|e| e.cost)
    }

    /// Forward pass, then one reverse sweep for every parameter.
    pub fn gradient(&self, p: &ParameterSet) -> Result<GradientReport> {
        let (eval, cells) = self.evaluate_with_cells(p)?;
        let grid = &self.sim.grid;
        let adjoints = self
            .observations
            .frames
            .par_iter()
            .zip(&eval.frames)
            .zip(&cells)
            .map(|((frame, fm), c)| adjoint_ssc(grid, &self.band, frame, fm, c, &self.options.extension))
            .collect::<Result<Vec<_>>>()?;
        let mut seeds: BTreeMap<usize, Vec<_>> = BTreeMap::new();
        let mut dropped = 0;
        for (frame, adj) in self.observations.frames.iter().zip(adjoints) {
            dropped += adj.dropped;
            match seeds.get_mut(&frame.t) {
                Some(s) => s.iter_mut().zip(&adj.u_hat).for_each(|(a, b)| *a += b),
                None => {
                    seeds.insert(frame.t, adj.u_hat);
                }
            }
        }
        if dropped > 0 {
            log::warn!("{dropped} observed points dropped from the gradient");
        }
        let opts = SweepOptions {
            frozen_rotations: self.options.frozen_rotations,
            tolerance: self.options.adjoint_tolerance.unwrap_or(self.sim.settings.solver.tolerance * 0.1),
        };
        let sweep = reverse_sweep(&self.sim, p, &eval.trajectory, &seeds, &BTreeMap::new(), &opts)?;
        Ok(GradientReport {
            cost: eval.cost,
            gradient: sweep.gradient,
            step_adjoint_norms: sweep.step_norms,
            dropped_points: dropped,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdScheme {
    /// `(J(p + Δ) − J(p)) / Δ`.
    #[default]
    Forward,
    /// `(J(p + Δ) − J(p − Δ)) / 2Δ`.
    Central,
}

/// Finite-difference derivative of `f` for each `(parameter, Δ)` pair; other entries stay zero.
pub fn finite_difference_gradient(
    f: impl Fn(&ParameterSet) -> Result<f64> + Sync,
    p: &ParameterSet,
    steps: &[(Param, f64)],
    scheme: FdScheme,
) -> Result<ParamGradient> {
    if let Some((q, d)) = steps.iter().find(|(_, d)| !(*d > 0.0)) {
        return Err(Error::Config(format!("finite-difference step for {q} must be positive, got {d}")));
    }
    let base = match scheme {
        FdScheme::Forward => Some(f(p)?),
        FdScheme::Central => None,
    };
    let values = steps
        .par_iter()
        .map(|&(q, d)| {
            let x = p.get(q);
            let plus = f(&p.with(q, x + d))?;
            Ok(match base {
                Some(j) => (plus - j) / d,
                None => (plus - f(&p.with(q, x - d))?) / (2.0 * d),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut g = ParamGradient::default();
    for ((q, _), v) in steps.iter().zip(values) {
        g.add(*q, v);
    }
    Ok(g)
}

/// CSV `parameter,value,gradient[,finite_difference]` over `params`.
pub fn write_gradient_csv(
    p: &ParameterSet,
    gradient: &ParamGradient,
    fd: Option<&ParamGradient>,
    params: &[Param],
    mut w: impl Write,
) -> Result<()> {
    write!(w, "parameter,value,gradient")?;
    if fd.is_some() {
        write!(w, ",finite_difference")?;
    }
    writeln!(w)?;
    for &q in params {
        write!(w, "{},{:e},{:e}", q, p.get(q), gradient.get(q))?;
        if let Some(fd) = fd {
            write!(w, ",{:e}", fd.get(q))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SimulationSettings;
    use crate::grid::{DirichletRegion, Shape, SignedDistanceGrid, SimulationGrid};
    use crate::math::Vec3;
    use crate::observation::{extract_surface_samples, ObservationFrame};
    use std::sync::Arc;

    fn scene(frames: Vec<ObservationFrame>) -> Objective {
        let sdf = SignedDistanceGrid::from_shape(&Shape::Sphere { center: [0.0, 0.0, 2.8], radius: 2.2 }, 1.0, 6).unwrap();
        let grid = Arc::new(SimulationGrid::new(sdf, &DirichletRegion::None).unwrap());
        let mut settings = SimulationSettings { steps: 4, dt: 0.02, ..Default::default() };
        settings.solver.tolerance = 1e-13;
        let sim = Simulator::new(grid, settings).unwrap();
        let options = ObjectiveOptions {
            extension: ExtensionOptions { tolerance: 1e-13, max_sweeps: 20000, ..Default::default() },
            ..Default::default()
        };
        Objective::new(sim, ObservationSequence { frames }, options).unwrap()
    }

    fn params() -> ParameterSet {
        ParameterSet {
            gravity: Vec3::new(0.0, 0.0, -60.0),
            youngs_modulus: 800.0,
            poisson_ratio: 0.3,
            mass_density: 1.0,
            rayleigh_stiffness: 0.01,
            ground_height: 0.2,
            initial_angular_velocity: Vec3::new(0.0, 0.5, 0.0),
            ..Default::default()
        }
    }

    fn observed(obj: &Objective, truth: &ParameterSet) -> Vec<ObservationFrame> {
        let traj = obj.sim.simulate(truth, false).unwrap();
        let samples = extract_surface_samples(&obj.sim.grid);
        [2, 4]
            .iter()
            .map(|&t| ObservationFrame::new(t, samples.iter().map(|s| s.displaced(&obj.sim.grid, &traj.state(t).u)).collect()))
            .collect()
    }

    #[test]
    fn empty_observations_give_zero() {
        let obj = scene(Vec::new());
        let r = obj.gradient(&params()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.gradient.0.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cost_is_bit_identical_to_forward_only() {
        let base = scene(Vec::new());
        let truth = ParameterSet { youngs_modulus: 1200.0, ..params() };
        let obj = scene(observed(&base, &truth));
        let p = params();
        let r = obj.gradient(&p).unwrap();
        assert!(r.cost > 0.0);
        assert_eq!(r.cost.to_bits(), obj.cost(&p).unwrap().to_bits());
        // and to the standalone cost function
        let eval = obj.evaluate(&p).unwrap();
        let (j, _) = crate::cost::ssc_cost(&obj.observations, &eval.fields, &obj.sim.grid, TieBreak::MostNegative).unwrap();
        assert_eq!(j.to_bits(), r.cost.to_bits());
        assert_eq!(r.step_adjoint_norms.len(), 4);
        assert!(r.gradient.0.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn ground_truth_gives_vanishing_gradient() {
        let base = scene(Vec::new());
        let p = params();
        let obj = scene(observed(&base, &p));
        let r = obj.gradient(&p).unwrap();
        assert!(r.cost < 1e-16, "{}", r.cost);
        assert!(r.gradient.0.iter().all(|g| g.abs() < 1e-6), "{:?}", r.gradient);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let base = scene(Vec::new());
        let truth = ParameterSet { youngs_modulus: 1100.0, gravity: Vec3::new(0.0, 5.0, -60.0), ..params() };
        let obj = scene(observed(&base, &truth));
        let p = params();
        let r = obj.gradient(&p).unwrap();
        let steps = [
            (Param::YoungsModulus, 1e-3 * p.youngs_modulus),
            (Param::GravityY, 1e-3),
            (Param::MassDensity, 1e-4),
            (Param::GroundHeight, 1e-4),
        ];
        let fd = finite_difference_gradient(|q| obj.cost(q), &p, &steps, FdScheme::Central).unwrap();
        for (q, _) in steps {
            let (a, b) = (r.gradient.get(q), fd.get(q));
            assert!((a - b).abs() <= 1e-3 * b.abs().max(1e-8), "{q}: adjoint {a} fd {b}");
        }
    }

    #[test]
    fn finite_differences_of_a_quadratic() {
        let p = ParameterSet { youngs_modulus: 3.0, ..Default::default() };
        let f = |q: &ParameterSet| Ok(q.youngs_modulus * q.youngs_modulus);
        let d = 0.01;
        let g = finite_difference_gradient(f, &p, &[(Param::YoungsModulus, d)], FdScheme::Forward).unwrap();
        assert!((g.get(Param::YoungsModulus) - (6.0 + d)).abs() < 1e-10);
        let g = finite_difference_gradient(f, &p, &[(Param::YoungsModulus, d)], FdScheme::Central).unwrap();
        assert!((g.get(Param::YoungsModulus) - 6.0).abs() < 1e-10);
        assert!(finite_difference_gradient(f, &p, &[(Param::YoungsModulus, 0.0)], FdScheme::Forward).is_err());
    }

    #[test]
    fn forward_differences_converge_to_central() {
        // Richardson: the forward error halves with the step
        let p = ParameterSet { youngs_modulus: 2.0, ..Default::default() };
        let f = |q: &ParameterSet| Ok(q.youngs_modulus.sin() * q.youngs_modulus.exp());
        let exact = 2f64.exp() * (2f64.sin() + 2f64.cos());
        let err = |d: f64| {
            let g = finite_difference_gradient(f, &p, &[(Param::YoungsModulus, d)], FdScheme::Forward).unwrap();
            (g.get(Param::YoungsModulus) - exact).abs()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!((e1 / e2 - 2.0).abs() < 0.05, "{e1} {e2}");
    }

    #[test]
    fn gradient_csv_layout() {
        let p = params();
        let mut g = ParamGradient::default();
        g.add(Param::YoungsModulus, -2.5);
        let mut buf = Vec::new();
        write_gradient_csv(&p, &g, Some(&g), &[Param::YoungsModulus, Param::GroundHeight], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "parameter,value,gradient,finite_difference");
        assert_eq!(lines[1], "youngs_modulus,8e2,-2.5e0,-2.5e0");
        assert_eq!(lines.len(), 3);
    }
}
