use std::collections::BTreeMap;

use rayon::prelude::*;

use super::collision::adjoint_contact;
use super::params::{Param, ParamGradient, ParameterSet};
use crate::dynamics::{solve_linear, Simulator, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::fem::corotation::{deformation_gradient_adjoint, polar_rotation_adjoint};
use crate::fem::material::lame_derivatives;
use crate::fem::{lame_from_young_poisson, BlockedSparseMatrix, Mat24};
use crate::math::{trilinear_weights, Mat3, Vec3};

type Vec24 = nalgebra::SVector<f64, 24>;

fn pack(v: &[Vec3; 8]) -> Vec24 {
    Vec24::from_iterator(v.iter().flat_map(|x| [x[0], x[1], x[2]]))
}

fn corner(v: &Vec24, c: usize) -> Vec3 {
    Vec3::new(v[3 * c], v[3 * c + 1], v[3 * c + 2])
}

/// Adjoint of `D = α₁ M + α₂ K` for a given `D̂`.
#[derive(Clone, Debug)]
pub struct RayleighAdjoint {
    /// `vec(M)·vec(D̂)`.
    pub alpha1: f64,
    /// `vec(K)·vec(D̂)`.
    pub alpha2: f64,
    /// `α₁ D̂`.
    pub m_hat: BlockedSparseMatrix,
    /// `α₂ D̂`.
    pub k_hat: BlockedSparseMatrix,
}

pub fn adjoint_rayleigh(
    d_hat: &BlockedSparseMatrix,
    m: &BlockedSparseMatrix,
    k: &BlockedSparseMatrix,
    alpha1: f64,
    alpha2: f64,
) -> Result<RayleighAdjoint> {
    for other in [m, k] {
        if other.block_dim() != d_hat.block_dim() {
            return Err(Error::Dimension { expected: d_hat.block_dim(), got: other.block_dim() });
        }
    }
    let scaled = |a: f64| {
        let mut x = d_hat.clone();
        x.scale(a);
        x
    };
    Ok(RayleighAdjoint {
        alpha1: m.frobenius_dot(d_hat),
        alpha2: k.frobenius_dot(d_hat),
        m_hat: scaled(alpha1),
        k_hat: scaled(alpha2),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Treat element rotations as constants in the reverse pass.
    pub frozen_rotations: bool,
    /// Relative CG tolerance of the backward solves.
    pub tolerance: f64,
}

/// Parameter gradient and the norm of the displacement adjoint entering each step.
#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub gradient: ParamGradient,
    /// `‖û⁽ᵗ⁾‖` for `t = 1..=T`.
    pub step_norms: Vec<f64>,
}

// Per-element products of the rank-one stiffness adjoint `r̂ wᵀ` and the
// rotation-offset adjoint `ĝ`.
struct ElementAdjoint {
    mu: f64,
    lambda: f64,
    corners: [Vec3; 8],
}

/// Reverse sweep through a recorded trajectory. `u_seeds[t]` / `v_seeds[t]` are
/// `∂J/∂u⁽ᵗ⁾` and `∂J/∂u̇⁽ᵗ⁾` over the DOFs.
pub fn reverse_sweep(
    sim: &Simulator,
    p: &ParameterSet,
    traj: &TrajectoryRecord,
    u_seeds: &BTreeMap<usize, Vec<Vec3>>,
    v_seeds: &BTreeMap<usize, Vec<Vec3>>,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    let steps = traj.num_steps();
    if traj.steps.len() != steps {
        return Err(Error::Config("trajectory was not recorded for the reverse sweep".into()));
    }
    let n = sim.num_dofs();
    for s in u_seeds.values().chain(v_seeds.values()) {
        if s.len() != n {
            return Err(Error::Dimension { expected: n, got: s.len() });
        }
    }
    let settings = &sim.settings;
    let asm = &sim.assembler;
    let grid = &sim.grid;
    let (theta, dt) = (settings.theta, settings.dt);
    let a = theta * dt;
    let cm = 1.0 / a + p.rayleigh_mass;
    let ck = p.rayleigh_stiffness - (1.0 - theta) * dt;
    let ck_a = a + p.rayleigh_stiffness;
    let (mu, lambda) = lame_from_young_poisson(p.youngs_modulus, p.poisson_ratio)?;
    let mass = asm.mass_diagonal(p.mass_density);
    let volumes = asm.nodal_volumes();
    let plane = settings.ground_plane(p);
    let h = asm.spacing();
    let max_iter = settings.solver.max_iter_factor * 3 * n;

    let mut grad = ParamGradient::default();
    let (mut mu_hat, mut lambda_hat) = (0.0, 0.0);
    let mut u_hat = vec![Vec3::zeros(); n];
    let mut v_hat = vec![Vec3::zeros(); n];
    let mut norms = vec![0.0; steps];
    let add_seeds = |t: usize, u_hat: &mut [Vec3], v_hat: &mut [Vec3]| {
        if let Some(s) = u_seeds.get(&t) {
            u_hat.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
        if let Some(s) = v_seeds.get(&t) {
            v_hat.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
    };

    for t in (1..=steps).rev() {
        add_seeds(t, &mut u_hat, &mut v_hat);
        let prev = traj.state(t - 1);
        let cur = traj.state(t);
        let rec = &traj.steps[t - 1];
        let mut up_hat = vec![Vec3::zeros(); n];
        let mut vp_hat = vec![Vec3::zeros(); n];
        // u̇ᵗ = (uᵗ − uᵗ⁻¹)/(θΔt) − (1−θ)/θ u̇ᵗ⁻¹
        for i in 0..n {
            u_hat[i] += v_hat[i] / a;
            up_hat[i] -= v_hat[i] / a;
            vp_hat[i] -= v_hat[i] * ((1.0 - theta) / theta);
        }
        norms[t - 1] = u_hat.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();

        let rot: Option<Vec<Mat3>> =
            (!rec.rotations.is_empty()).then(|| rec.rotations.iter().map(|r| r.r).collect());
        let k = asm.stiffness(mu, lambda, settings.nitsche_penalty, rot.as_deref());
        let sys = sim.system_matrix(&k, &mass, p);
        let r = solve_linear(&sys, &u_hat, opts.tolerance, max_iter)?;
        let kr = k.mul_vec(&r);
        for i in 0..n {
            up_hat[i] += r[i] * (cm * mass[i]) + kr[i] * ck;
            vp_hat[i] += r[i] * (mass[i] / theta);
        }
        // M̂ = r̂ zᵀ and K̂ = r̂ wᵀ from both the Newmark matrix and the right-hand side
        let mut w = vec![Vec3::zeros(); n];
        for i in 0..n {
            let diff = prev.u[i] - cur.u[i];
            grad.add(Param::RayleighMass, mass[i] * r[i].dot(&diff));
            grad.add(Param::RayleighStiffness, kr[i].dot(&diff));
            let z = diff * cm + prev.v[i] / theta;
            grad.add(Param::MassDensity, volumes[i] * r[i].dot(&z));
            w[i] = prev.u[i] * ck - cur.u[i] * ck_a;
        }
        let f_hat: Vec<Vec3> = r.iter().map(|x| x * dt).collect();
        for i in 0..n {
            grad.add_vec(Param::GravityX, &(f_hat[i] * (p.mass_density * volumes[i])));
            grad.add(Param::MassDensity, volumes[i] * p.gravity.dot(&f_hat[i]));
        }

        let differentiate_rotations = rot.is_some() && !opts.frozen_rotations;
        let per_element: Vec<ElementAdjoint> = (0..asm.num_cells())
            .into_par_iter()
            .map(|e| {
                let dofs = asm.cell_dofs(e);
                let (kmu, klam) = asm.stiffness_parts(e);
                let ke: Mat24 = kmu * mu + klam * lambda;
                let re = rot.as_ref().map_or_else(Mat3::identity, |r| r[e]);
                let rt = re.transpose();
                let rc: [Vec3; 8] = dofs.map(|d| r[d]);
                let wc: [Vec3; 8] = dofs.map(|d| w[d]);
                let ra = pack(&rc.map(|x| rt * x));
                let wb = pack(&wc.map(|x| rt * x));
                let mut out = ElementAdjoint {
                    mu: ra.dot(&(kmu * wb)),
                    lambda: ra.dot(&(klam * wb)),
                    corners: [Vec3::zeros(); 8],
                };
                if rot.is_none() {
                    return out;
                }
                // g_r = T K (Tᵀx − x) with adjoint ĝ = −f̂
                let x = asm.local_rest();
                let y = pack(&x.map(|xc| rt * xc - xc));
                let ky = ke * y;
                let g_hat: [Vec3; 8] = dofs.map(|d| -f_hat[d]);
                let zh = pack(&g_hat.map(|g| rt * g));
                out.mu += zh.dot(&(kmu * y));
                out.lambda += zh.dot(&(klam * y));
                let rec_e = &rec.rotations[e];
                if !differentiate_rotations || rec_e.degenerate || rec_e.iterations == 0 {
                    return out;
                }
                let kb = ke * wb;
                let ka = ke * ra;
                let yh = ke * zh;
                let mut r_hat = Mat3::zeros();
                for c in 0..8 {
                    r_hat += rc[c] * corner(&kb, c).transpose() + wc[c] * corner(&ka, c).transpose();
                    r_hat += g_hat[c] * corner(&ky, c).transpose() + x[c] * corner(&yh, c).transpose();
                }
                let f_hat_e = polar_rotation_adjoint(&rec_e.f, rec_e.iterations, &r_hat);
                deformation_gradient_adjoint(&f_hat_e, h, &mut out.corners);
                out
            })
            .collect();
        for (e, ea) in per_element.iter().enumerate() {
            mu_hat += ea.mu;
            lambda_hat += ea.lambda;
            for (c, &d) in asm.cell_dofs(e).iter().enumerate() {
                up_hat[d] += ea.corners[c];
            }
        }
        for (e, parts) in asm.nitsche_parts() {
            let dofs = asm.cell_dofs(*e);
            let ra = pack(&dofs.map(|d| r[d]));
            let wb = pack(&dofs.map(|d| w[d]));
            mu_hat -= ra.dot(&(parts.consistency_mu * wb));
            lambda_hat -= ra.dot(&(parts.consistency_lambda * wb));
        }

        if let Some(pl) = &plane {
            for contact in &rec.contacts {
                let cell = &grid.surface_cells()[contact.surface];
                let dofs = grid.cell_dofs(cell.cell);
                let mut fb = Vec3::zeros();
                for c in 0..8 {
                    fb += f_hat[dofs[c]] * cell.quadrature.weights[c];
                }
                let ca = adjoint_contact(contact, pl, a, &fb);
                grad.add(Param::GroundHeight, ca.height);
                grad.add(Param::GroundTheta, ca.theta);
                grad.add(Param::GroundPhi, ca.phi);
                let nw = trilinear_weights(&cell.quadrature.centroid);
                for c in 0..8 {
                    up_hat[dofs[c]] += ca.position * nw[c];
                    vp_hat[dofs[c]] += ca.velocity * nw[c];
                }
            }
        }
        u_hat = up_hat;
        v_hat = vp_hat;
    }
    add_seeds(0, &mut u_hat, &mut v_hat);
    let c = grid.centroid();
    for (x, vh) in grid.rest_positions().iter().zip(&v_hat) {
        grad.add_vec(Param::VelocityX, vh);
        grad.add_vec(Param::AngularVelocityX, &(x - c).cross(vh));
    }
    let dl = lame_derivatives(p.youngs_modulus, p.poisson_ratio);
    grad.add(Param::YoungsModulus, mu_hat * dl[0][0] + lambda_hat * dl[1][0]);
    grad.add(Param::PoissonRatio, mu_hat * dl[0][1] + lambda_hat * dl[1][1]);
    Ok(SweepResult { gradient: grad, step_norms: norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SimulationSettings;
    use crate::grid::{DirichletRegion, Shape, SignedDistanceGrid, SimulationGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grid(shape: Shape, dirichlet: DirichletRegion) -> Arc<SimulationGrid> {
        let sdf = SignedDistanceGrid::from_shape(&shape, 1.0, 1).unwrap();
        Arc::new(SimulationGrid::new(sdf, &dirichlet).unwrap())
    }

    fn ball() -> Arc<SimulationGrid> {
        grid(Shape::Sphere { center: [0.0, 0.0, 2.4], radius: 2.1 }, DirichletRegion::None)
    }

    fn sim(g: Arc<SimulationGrid>, steps: usize, corotation: bool, ground: bool) -> Simulator {
        let mut s = SimulationSettings { steps, dt: 0.02, corotation, ..Default::default() };
        if !ground {
            s.ground = None;
        }
        s.solver.tolerance = 1e-14;
        s.solver.max_iter_factor = 50;
        Simulator::new(g, s).unwrap()
    }

    fn params() -> ParameterSet {
        ParameterSet {
            gravity: Vec3::new(1.0, -2.0, -50.0),
            youngs_modulus: 600.0,
            poisson_ratio: 0.32,
            mass_density: 1.3,
            rayleigh_mass: 0.05,
            rayleigh_stiffness: 0.01,
            ground_height: 0.15,
            ground_theta: 0.1,
            ground_phi: 0.4,
            initial_velocity: Vec3::new(0.5, 0.2, -3.0),
            initial_angular_velocity: Vec3::new(0.3, 1.5, -0.4),
        }
    }

    fn opts() -> SweepOptions {
        SweepOptions { frozen_rotations: false, tolerance: 1e-14 }
    }

    // J = Σ_t ½ ‖u⁽ᵗ⁾ − target⁽ᵗ⁾‖² over every step
    struct Tracking {
        targets: Vec<Vec<Vec3>>,
    }

    impl Tracking {
        fn new(sim: &Simulator) -> Self {
            let n = sim.num_dofs();
            let targets = (0..=sim.settings.steps)
                .map(|t| (0..n).map(|i| Vec3::new(0.01 * (i % 5) as f64, -0.02 * t as f64, 0.003 * i as f64 % 0.1)).collect())
                .collect();
            Self { targets }
        }

        fn cost(&self, sim: &Simulator, p: &ParameterSet) -> f64 {
            let traj = sim.simulate(p, false).unwrap();
            traj.states
                .iter()
                .zip(&self.targets)
                .map(|(s, t)| s.u.iter().zip(t).map(|(a, b)| 0.5 * (a - b).norm_squared()).sum::<f64>())
                .sum()
        }

        fn gradient(&self, sim: &Simulator, p: &ParameterSet, o: &SweepOptions) -> ParamGradient {
            let traj = sim.simulate(p, true).unwrap();
            let seeds = (1..=sim.settings.steps)
                .map(|t| (t, traj.state(t).u.iter().zip(&self.targets[t]).map(|(a, b)| a - b).collect()))
                .collect();
            reverse_sweep(sim, p, &traj, &seeds, &BTreeMap::new(), o).unwrap().gradient
        }
    }

    fn central(f: impl Fn(&ParameterSet) -> f64, p: &ParameterSet, q: Param, d: f64) -> f64 {
        let x = p.get(q);
        (f(&p.with(q, x + d)) - f(&p.with(q, x - d))) / (2.0 * d)
    }

    fn fd_step(p: &ParameterSet, q: Param) -> f64 {
        1e-5 * p.get(q).abs().max(1.0)
    }

    fn check_all(sim: &Simulator, p: &ParameterSet, o: &SweepOptions, params: &[Param], tol: f64) {
        let tr = Tracking::new(sim);
        let g = tr.gradient(sim, p, o);
        for &q in params {
            let fd = central(|x| tr.cost(sim, x), p, q, fd_step(p, q));
            let a = g.get(q);
            assert!((a - fd).abs() <= tol * fd.abs().max(1e-6), "{q}: adjoint {a} fd {fd}");
        }
    }

    #[test]
    fn zero_trajectory_has_zero_gradient() {
        let s = sim(ball(), 4, true, false);
        let p = ParameterSet { gravity: Vec3::zeros(), ..Default::default() };
        let traj = s.simulate(&p, true).unwrap();
        // J = ½‖u⁽ᵀ⁾‖² seeds û⁽ᵀ⁾ = u⁽ᵀ⁾ = 0
        let seeds = BTreeMap::from([(4, traj.state(4).u.clone())]);
        let g = reverse_sweep(&s, &p, &traj, &seeds, &BTreeMap::new(), &opts()).unwrap().gradient;
        assert!(g.0.iter().all(|&x| x == 0.0));
    }

    fn cantilever() -> Arc<SimulationGrid> {
        grid(
            Shape::Bar { start: [0.0, 0.0, 0.0], length: 6.0, half_width: 1.1, half_height: 1.1 },
            DirichletRegion::HalfSpace { point: [0.6, 0.0, 0.0], normal: [1.0, 0.0, 0.0] },
        )
    }

    #[test]
    fn single_component_oscillation_matches_fd() {
        // J = ½ u_x(T)² of one node of a swinging cantilever
        let s = sim(cantilever(), 6, false, false);
        let p = ParameterSet { gravity: Vec3::new(0.0, 0.0, -40.0), rayleigh_mass: 0.0, rayleigh_stiffness: 0.0, ..params() };
        let d = s.num_dofs() - 1;
        let j = |q: &ParameterSet| 0.5 * s.simulate(q, false).unwrap().state(6).u[d].z.powi(2);
        let traj = s.simulate(&p, true).unwrap();
        let mut seed = vec![Vec3::zeros(); s.num_dofs()];
        seed[d].z = traj.state(6).u[d].z;
        let g = reverse_sweep(&s, &p, &traj, &BTreeMap::from([(6, seed)]), &BTreeMap::new(), &opts()).unwrap();
        let fd = central(j, &p, Param::YoungsModulus, 1e-4 * p.youngs_modulus);
        let a = g.gradient.get(Param::YoungsModulus);
        assert!(fd.abs() > 1e-12);
        assert!((a - fd).abs() <= 1e-7 * fd.abs(), "adjoint {a} fd {fd}");
    }

    #[test]
    fn linear_torus_stiffness_gradient() {
        // a torus dropped onto the ground
        let g = grid(
            Shape::Torus { center: [0.0, 0.0, 1.3], major_radius: 2.6, minor_radius: 1.1 },
            DirichletRegion::None,
        );
        let s = sim(g, 5, false, true);
        let p = ParameterSet { ground_height: 0.1, ..params() };
        let tr = Tracking::new(&s);
        let a = tr.gradient(&s, &p, &opts()).get(Param::YoungsModulus);
        let fd = central(|x| tr.cost(&s, x), &p, Param::YoungsModulus, 1e-3 * p.youngs_modulus);
        assert!(fd.abs() > 1e-12);
        assert!((a - fd).abs() <= 1e-4 * fd.abs(), "adjoint {a} fd {fd}");
    }

    #[test]
    fn linear_gradient_matches_fd_for_every_parameter() {
        let s = sim(ball(), 5, false, true);
        check_all(&s, &params(), &opts(), &Param::ALL, 1e-5);
    }

    #[test]
    fn anchored_bar_with_nitsche_boundary() {
        let s = sim(cantilever(), 4, false, false);
        let p = ParameterSet { gravity: Vec3::new(0.0, 0.0, -30.0), ..params() };
        check_all(&s, &p, &opts(), &[Param::YoungsModulus, Param::PoissonRatio, Param::MassDensity, Param::GravityZ], 1e-5);
    }

    #[test]
    fn corotated_gradient_matches_fd_for_every_parameter() {
        let s = sim(ball(), 5, true, true);
        check_all(&s, &params(), &opts(), &Param::ALL, 1e-3);
    }

    #[test]
    fn frozen_rotations_with_small_rotations() {
        let s = sim(ball(), 4, true, false);
        let p = ParameterSet {
            gravity: Vec3::new(0.0, 0.0, -5.0),
            initial_angular_velocity: Vec3::zeros(),
            initial_velocity: Vec3::new(0.0, 0.0, 0.1),
            ..params()
        };
        let o = SweepOptions { frozen_rotations: true, ..opts() };
        check_all(&s, &p, &o, &[Param::YoungsModulus, Param::MassDensity, Param::GravityZ], 1e-3);
    }

    #[test]
    fn plane_height_on_bouncing_ball() {
        let s = sim(ball(), 8, true, true);
        let p = ParameterSet { ground_height: 0.25, ground_theta: 0.0, ..params() };
        let tr = Tracking::new(&s);
        let a = tr.gradient(&s, &p, &opts()).get(Param::GroundHeight);
        let fd = central(|x| tr.cost(&s, x), &p, Param::GroundHeight, 1e-5);
        assert!((a - fd).abs() <= 1e-3 * fd.abs(), "adjoint {a} fd {fd}");
    }

    #[test]
    fn raising_the_plane_against_low_observations() {
        // observations pin the object below its simulated position, so raising the plane increases J
        let s = sim(ball(), 8, true, true);
        let p = ParameterSet { ground_height: 0.3, ground_theta: 0.0, initial_angular_velocity: Vec3::zeros(), ..params() };
        let traj = s.simulate(&p, true).unwrap();
        let target: Vec<Vec3> = traj.state(8).u.iter().map(|u| u - Vec3::new(0.0, 0.0, 0.5)).collect();
        let seeds = BTreeMap::from([(8, traj.state(8).u.iter().zip(&target).map(|(a, b)| a - b).collect())]);
        let g = reverse_sweep(&s, &p, &traj, &seeds, &BTreeMap::new(), &opts()).unwrap().gradient;
        let j = |q: &ParameterSet| {
            let u = s.simulate(q, false).unwrap().states.pop().unwrap().u;
            u.iter().zip(&target).map(|(a, b)| 0.5 * (a - b).norm_squared()).sum::<f64>()
        };
        let fd = central(j, &p, Param::GroundHeight, 1e-4);
        assert!(fd > 0.0 && g.get(Param::GroundHeight) > 0.0, "adjoint {} fd {fd}", g.get(Param::GroundHeight));
    }

    #[test]
    fn reverse_sweep_is_linear_in_the_seed() {
        let s = sim(ball(), 4, true, true);
        let p = params();
        let traj = s.simulate(&p, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seed: Vec<Vec3> = (0..s.num_dofs()).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let vseed: Vec<Vec3> = seed.iter().map(|x| x * 0.3).collect();
        let run = |a: f64| {
            let u = BTreeMap::from([(4, seed.iter().map(|x| x * a).collect()), (2, seed.iter().map(|x| -x * a).collect())]);
            let v = BTreeMap::from([(3, vseed.iter().map(|x| x * a).collect())]);
            reverse_sweep(&s, &p, &traj, &u, &v, &opts()).unwrap().gradient
        };
        let (g1, g3) = (run(1.0), run(-2.5));
        for (a, b) in g1.0.iter().zip(&g3.0) {
            assert!((b + 2.5 * a).abs() <= 1e-8 * a.abs().max(1e-12), "{a} {b}");
        }
    }

    #[test]
    fn velocity_seed_matches_fd() {
        let s = sim(ball(), 3, true, true);
        let p = params();
        let traj = s.simulate(&p, true).unwrap();
        let seeds = BTreeMap::from([(2, traj.state(2).v.clone())]);
        let g = reverse_sweep(&s, &p, &traj, &BTreeMap::new(), &seeds, &opts()).unwrap().gradient;
        let j = |q: &ParameterSet| {
            s.simulate(q, false).unwrap().state(2).v.iter().map(|v| 0.5 * v.norm_squared()).sum::<f64>()
        };
        for q in [Param::YoungsModulus, Param::VelocityZ, Param::AngularVelocityY] {
            let fd = central(j, &p, q, fd_step(&p, q));
            assert!((g.get(q) - fd).abs() <= 1e-3 * fd.abs(), "{q}: {} vs {fd}", g.get(q));
        }
    }

    #[test]
    fn rayleigh_adjoint_examples() {
        let s = sim(ball(), 1, false, false);
        let (mu, la) = lame_from_young_poisson(500.0, 0.3).unwrap();
        let k = s.assembler.stiffness(mu, la, 1e3, None);
        let m = s.assembler.mass_matrix(2.0);
        let r = adjoint_rayleigh(&m, &m, &k, 0.1, 0.2).unwrap();
        let mf: f64 = s.assembler.mass_diagonal(2.0).iter().map(|x| 3.0 * x * x).sum();
        assert!((r.alpha1 - mf).abs() < 1e-12 * mf);
        assert!((r.m_hat.frobenius_dot(&m) - 0.1 * mf).abs() < 1e-12 * mf);
        let zero = k.zeros_like();
        let z = adjoint_rayleigh(&zero, &m, &k, 0.1, 0.2).unwrap();
        assert_eq!((z.alpha1, z.alpha2), (0.0, 0.0));
        // dense trace oracle on a random matrix with the stiffness pattern
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut d = k.zeros_like();
        for slot in 0..d.nnz_blocks() {
            *d.block_at_mut(slot) = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        }
        let r = adjoint_rayleigh(&d, &m, &k, 0.0, 0.0).unwrap();
        let (dd, md, kd) = (d.to_dense(), m.to_dense(), k.to_dense());
        assert!((r.alpha1 - (md.transpose() * &dd).trace()).abs() < 1e-9 * r.alpha1.abs().max(1.0));
        assert!((r.alpha2 - (kd.transpose() * &dd).trace()).abs() < 1e-9 * r.alpha2.abs().max(1.0));
    }
}
