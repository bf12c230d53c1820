use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::collision::{plane_normal, GroundPlane};
use super::newmark::{validate_theta, SimState};
use super::solver::{solve_linear_from, SolveStats, SolverOptions};
use crate::adjoint::ParameterSet;
use crate::error::{Error, Result};
use crate::fem::{Assembler, BlockedSparseMatrix, ElementRotation};
use crate::grid::{read_grid, write_grid, SimulationGrid};
use crate::math::{softmin, softmin_zero_derivative, trilinear_weights, Mat3, Vec3};

/// Penalty contact constants that are not optimized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactSettings {
    pub stiffness: f64,
    pub softness: f64,
}

impl Default for ContactSettings {
    fn default() -> Self {
        Self { stiffness: 1e4, softness: 8.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSettings {
    pub dt: f64,
    pub theta: f64,
    pub steps: usize,
    pub corotation: bool,
    pub nitsche_penalty: f64,
    /// Ground contact; `None` disables collisions.
    pub ground: Option<ContactSettings>,
    pub solver: SolverOptions,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            dt: 0.01,
            theta: 0.6,
            steps: 40,
            corotation: true,
            nitsche_penalty: 1e8,
            ground: Some(ContactSettings::default()),
            solver: SolverOptions::default(),
        }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        validate_theta(self.theta)?;
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::Config("number of time steps must be at least 1".into()));
        }
        if !(self.nitsche_penalty > 0.0) {
            return Err(Error::Config("Nitsche penalty must be positive".into()));
        }
        if let Some(g) = &self.ground {
            if !(g.stiffness > 0.0) || !(g.softness > 0.0) {
                return Err(Error::Config("contact stiffness and softness must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn ground_plane(&self, p: &ParameterSet) -> Option<GroundPlane> {
        self.ground.map(|c| GroundPlane {
            height: p.ground_height,
            theta: p.ground_theta,
            phi: p.ground_phi,
            stiffness: c.stiffness,
            softness: c.softness,
        })
    }
}

/// Contact state of one surface collision point at the start of a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    /// Index into [`SimulationGrid::surface_cells`].
    pub surface: usize,
    pub position: Vec3,
    pub velocity: Vec3,
    pub distance: f64,
    /// Time-split force `f̄` before distribution to the corners.
    pub force: Vec3,
}

/// Data retained from one time step for the reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct StepRecord {
    /// Rotations from the displacement at the start of the step; empty without corotation.
    pub rotations: Vec<ElementRotation>,
    pub contacts: Vec<Contact>,
    pub solve: SolveStats,
}

/// `states[t]` for `t = 0..=T`; `steps[t-1]` produced `states[t]` when recorded.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub states: Vec<SimState>,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryRecord {
    pub fn num_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state(&self, t: usize) -> &SimState {
        &self.states[t]
    }
}

/// A grid with precomputed operators, shareable across runs.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub grid: Arc<SimulationGrid>,
    pub assembler: Arc<Assembler>,
    pub settings: SimulationSettings,
}

impl Simulator {
    pub fn new(grid: Arc<SimulationGrid>, settings: SimulationSettings) -> Result<Self> {
        settings.validate()?;
        let assembler = Arc::new(Assembler::new(&grid));
        Ok(Self { grid, assembler, settings })
    }

    pub fn num_dofs(&self) -> usize {
        self.grid.num_dofs()
    }

    /// `v₀ + ω₀ × (x′ − c)` with `c` the rest centroid.
    pub fn initial_state(&self, p: &ParameterSet) -> SimState {
        let c = self.grid.centroid();
        let v = self
            .grid
            .rest_positions()
            .iter()
            .map(|x| p.initial_velocity + p.initial_angular_velocity.cross(&(x - c)))
            .collect();
        SimState { u: vec![Vec3::zeros(); self.num_dofs()], v, t: 0 }
    }

    /// Contacts and corner forces for the state at the start of a step.
    pub fn contacts(&self, plane: &GroundPlane, state: &SimState) -> Vec<Contact> {
        let n = plane.normal();
        let theta_dt = self.settings.theta * self.settings.dt;
        self.grid
            .surface_cells()
            .iter()
            .enumerate()
            .map(|(s, cell)| {
                let w = trilinear_weights(&cell.quadrature.centroid);
                let dofs = self.grid.cell_dofs(cell.cell);
                let rest = self.grid.cell_rest_corners(cell.cell);
                let mut x = Vec3::zeros();
                let mut xdot = Vec3::zeros();
                for c in 0..8 {
                    x += (rest[c] + state.u[dofs[c]]) * w[c];
                    xdot += state.v[dofs[c]] * w[c];
                }
                let d = n.dot(&x) - plane.height;
                let s_val = softmin(0.0, d, plane.softness);
                let g = softmin_zero_derivative(d, plane.softness);
                let force = -n * (plane.stiffness * (s_val + theta_dt * g * n.dot(&xdot)));
                Contact { surface: s, position: x, velocity: xdot, distance: d, force }
            })
            .collect()
    }

    /// Adds `w_b(e, c) f̄` to each corner of every contact cell.
    pub fn scatter_contacts(&self, contacts: &[Contact], f: &mut [Vec3]) {
        for c in contacts {
            let cell = &self.grid.surface_cells()[c.surface];
            let dofs = self.grid.cell_dofs(cell.cell);
            for k in 0..8 {
                f[dofs[k]] += c.force * cell.quadrature.weights[k];
            }
        }
    }

    /// Newmark matrix `(1/(θΔt) + α₁) M + (θΔt + α₂) K` from the stiffness `K`.
    pub fn system_matrix(&self, k: &BlockedSparseMatrix, mass: &[f64], p: &ParameterSet) -> BlockedSparseMatrix {
        let (theta, dt) = (self.settings.theta, self.settings.dt);
        let mut a = k.clone();
        a.scale(theta * dt + p.rayleigh_stiffness);
        let cm = 1.0 / (theta * dt) + p.rayleigh_mass;
        for (i, m) in mass.iter().enumerate() {
            let slot = a.position(i, i).expect("diagonal in pattern");
            *a.block_at_mut(slot) += Mat3::identity() * (cm * m);
        }
        a
    }

    pub fn rotations_for(&self, u: &[Vec3], previous: Option<&[ElementRotation]>) -> Option<Vec<ElementRotation>> {
        self.settings.corotation.then(|| self.assembler.rotations(u, previous))
    }

    pub fn simulate(&self, p: &ParameterSet, record: bool) -> Result<TrajectoryRecord> {
        p.validate()?;
        let (mu, lambda) = crate::fem::lame_from_young_poisson(p.youngs_modulus, p.poisson_ratio)?;
        let (theta, dt) = (self.settings.theta, self.settings.dt);
        let n = self.num_dofs();
        let mass = self.assembler.mass_diagonal(p.mass_density);
        let gravity = self.assembler.gravity_force(p.mass_density, &p.gravity);
        let plane = self.settings.ground_plane(p);
        let max_iter = self.settings.solver.max_iter_factor * 3 * n;
        let mut states = Vec::with_capacity(self.settings.steps + 1);
        let mut steps = Vec::new();
        states.push(self.initial_state(p));
        let mut prev_rot: Option<Vec<ElementRotation>> = None;
        for _ in 0..self.settings.steps {
            let state = states.last().expect("initial state");
            let rotations = self.rotations_for(&state.u, prev_rot.as_deref());
            let rmat: Option<Vec<Mat3>> = rotations.as_ref().map(|r| r.iter().map(|x| x.r).collect());
            let k = self.assembler.stiffness(mu, lambda, self.settings.nitsche_penalty, rmat.as_deref());
            let mut f = gravity.clone();
            if let Some(r) = &rmat {
                for (fi, gi) in f.iter_mut().zip(self.assembler.rotation_offset(mu, lambda, r)) {
                    *fi -= gi;
                }
            }
            let contacts = plane.as_ref().map(|pl| self.contacts(pl, state)).unwrap_or_default();
            self.scatter_contacts(&contacts, &mut f);
            let a = self.system_matrix(&k, &mass, p);
            let ku = k.mul_vec(&state.u);
            let cm = 1.0 / (theta * dt) + p.rayleigh_mass;
            let ck = p.rayleigh_stiffness - (1.0 - theta) * dt;
            let rhs: Vec<Vec3> = (0..n)
                .map(|i| state.u[i] * (cm * mass[i]) + ku[i] * ck + state.v[i] * (mass[i] / theta) + f[i] * dt)
                .collect();
            let guess: Vec<Vec3> = state.u.iter().zip(&state.v).map(|(u, v)| u + v * dt).collect();
            let (u, solve) = solve_linear_from(&a, &rhs, Some(&guess), self.settings.solver.tolerance, max_iter)?;
            let v = super::newmark::newmark_velocity(&u, state, theta, dt);
            let t = state.t + 1;
            states.push(SimState { u, v, t });
            if record {
                steps.push(StepRecord { rotations: rotations.clone().unwrap_or_default(), contacts, solve });
            }
            prev_rot = rotations;
        }
        Ok(TrajectoryRecord { states, steps })
    }

    /// Minimum signed plane distance over all surface collision points of a state.
    pub fn min_plane_distance(&self, plane: &GroundPlane, state: &SimState) -> f64 {
        self.contacts(plane, state).iter().map(|c| c.distance).fold(f64::INFINITY, f64::min)
    }

    /// Displacement field on every lattice node (zero off the object).
    pub fn lattice_field(&self, u: &[Vec3]) -> Vec<f64> {
        let sdf = self.grid.sdf();
        let mut out = vec![0.0; 3 * sdf.node_count()];
        for (d, ud) in u.iter().enumerate() {
            let n = self.grid.dof_node(d);
            out[3 * n..3 * n + 3].copy_from_slice(ud.as_slice());
        }
        out
    }

    /// Writes the displacement of state `t` in the grid file format with 3 components.
    pub fn write_displacement(&self, state: &SimState, w: impl Write) -> Result<()> {
        let sdf = self.grid.sdf();
        write_grid(w, sdf.dims(), sdf.spacing(), &sdf.origin(), 3, &self.lattice_field(&state.u))
    }

    /// Reads a displacement written by [`Simulator::write_displacement`] back into DOF order.
    pub fn read_displacement(&self, r: impl std::io::Read) -> Result<Vec<Vec3>> {
        let f = read_grid(r)?;
        let sdf = self.grid.sdf();
        if f.components != 3 || f.dims != sdf.dims() {
            return Err(Error::Config(format!(
                "displacement grid {:?}x{} does not match the simulation grid {:?}x3",
                f.dims,
                f.components,
                sdf.dims()
            )));
        }
        Ok((0..self.num_dofs())
            .map(|d| {
                let n = self.grid.dof_node(d);
                Vec3::new(f.values[3 * n], f.values[3 * n + 1], f.values[3 * n + 2])
            })
            .collect())
    }

    /// CSV with columns `step,max_displacement,min_plane_distance,kinetic_energy`.
    pub fn write_summary(&self, p: &ParameterSet, traj: &TrajectoryRecord, mut w: impl Write) -> Result<()> {
        let mass = self.assembler.mass_diagonal(p.mass_density);
        let plane = self.settings.ground_plane(p);
        writeln!(w, "step,max_displacement,min_plane_distance,kinetic_energy")?;
        for s in &traj.states {
            let umax = s.u.iter().map(|u| u.norm()).fold(0.0, f64::max);
            let dmin = plane.as_ref().map(|pl| self.min_plane_distance(pl, s)).unwrap_or(f64::NAN);
            let ke: f64 = s.v.iter().zip(&mass).map(|(v, m)| 0.5 * m * v.norm_squared()).sum();
            writeln!(w, "{},{:.10e},{:.10e},{:.10e}", s.t, umax, dmin, ke)?;
        }
        Ok(())
    }
}

/// Convenience wrapper building a [`Simulator`] for a single run.
pub fn simulate_forward(
    grid: Arc<SimulationGrid>,
    params: &ParameterSet,
    settings: &SimulationSettings,
    record: bool,
) -> Result<TrajectoryRecord> {
    Simulator::new(grid, settings.clone())?.simulate(params, record)
}

/// Normal of the ground for the given parameters.
pub fn ground_normal(p: &ParameterSet) -> Vec3 {
    plane_normal(p.ground_theta, p.ground_phi)
}
