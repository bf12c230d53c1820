//! Synthetic single-view depth observations and their text format.

pub mod camera;
pub mod io;
pub mod samples;

pub use camera::{CameraConfig, DepthCamera};
pub use io::{read_observations, read_observations_from, write_observations, write_observations_to};
pub use samples::{extract_surface_samples, SurfaceSample};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::grid::SimulationGrid;
use crate::math::Vec3;

/// Observed points of one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationFrame {
    pub t: usize,
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl ObservationFrame {
    pub fn new(t: usize, points: Vec<Vec3>) -> Self {
        let weights = vec![1.0; points.len()];
        Self { t, points, weights }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationSequence {
    pub frames: Vec<ObservationFrame>,
}

impl ObservationSequence {
    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.frames.iter().enumerate() {
            if f.points.len() != f.weights.len() {
                return Err(Error::Dimension { expected: f.points.len(), got: f.weights.len() });
            }
            if let Some(w) = f.weights.iter().find(|w| !(**w > 0.0)) {
                return Err(Error::Config(format!("observation weights must be positive, got {w}")));
            }
            if i > 0 && f.t <= self.frames[i - 1].t {
                return Err(Error::Config(format!("frame timesteps must increase, {} follows {}", f.t, self.frames[i - 1].t)));
            }
        }
        Ok(())
    }

    pub fn num_points(&self) -> usize {
        self.frames.iter().map(|f| f.points.len()).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.frames.iter().flat_map(|f| &f.weights).sum()
    }

    pub fn timesteps(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn last_timestep(&self) -> Option<usize> {
        self.frames.last().map(|f| f.t)
    }
}

/// RNG for timestep `t` and camera `camera`, independent of evaluation order.
pub fn frame_rng(seed: u64, t: usize, camera: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((t as u64) << 8) | (camera as u64 & 0xff));
    rng
}

/// Displaces the samples, keeps those visible to `camera` and perturbs them
/// along the view ray.
pub fn render_depth_frame(
    grid: &SimulationGrid,
    samples: &[SurfaceSample],
    u: &[Vec3],
    camera: &DepthCamera,
    rng: &mut impl Rng,
) -> Vec<Vec3> {
    let h = grid.spacing();
    let displaced: Vec<Vec3> = samples.iter().map(|s| s.displaced(grid, u)).collect();
    camera.visible(&displaced, h).into_iter().map(|i| camera.add_noise(&displaced[i], h, rng)).collect()
}

/// Frames at `t = every_nth, 2·every_nth, …` up to the last simulated step;
/// each frame is the concatenation of all cameras' points, with unit weights.
pub fn generate_observations(
    grid: &SimulationGrid,
    samples: &[SurfaceSample],
    trajectory: &TrajectoryRecord,
    cameras: &[DepthCamera],
    every_nth: usize,
    seed: u64,
) -> Result<ObservationSequence> {
    if every_nth == 0 {
        return Err(Error::Config("every_nth must be at least 1".into()));
    }
    let steps: Vec<usize> = (every_nth..=trajectory.num_steps()).step_by(every_nth).collect();
    let frames = steps
        .par_iter()
        .map(|&t| {
            let u = &trajectory.state(t).u;
            let points = cameras
                .iter()
                .enumerate()
                .flat_map(|(c, cam)| render_depth_frame(grid, samples, u, cam, &mut frame_rng(seed, t, c)))
                .collect();
            ObservationFrame::new(t, points)
        })
        .collect();
    Ok(ObservationSequence { frames })
}

/// Camera placed uniformly at random on the upper hemisphere (w.r.t. `up`)
/// of radius `distance` around `target`, looking at `target`.
pub fn hemisphere_camera(target: Vec3, up: Vec3, distance: f64, template: &CameraConfig, rng: &mut impl Rng) -> Result<DepthCamera> {
    let up = up.normalize();
    let helper = if up.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = up.cross(&helper).normalize();
    let e2 = up.cross(&e1);
    let cos_t: f64 = rng.gen_range(0.0..1.0);
    let sin_t = (1.0 - cos_t * cos_t).sqrt();
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let dir = up * cos_t + (e1 * phi.cos() + e2 * phi.sin()) * sin_t;
    // near the zenith the view direction is parallel to `up`; use a horizontal up vector there
    let cam_up = if sin_t < 1e-3 { e1 } else { up };
    DepthCamera::new(
        target + dir * distance,
        target,
        cam_up,
        [template.res_x, template.res_y],
        template.fov_deg.to_radians(),
        template.noise_sigma,
        template.splat_radius,
    )
}
