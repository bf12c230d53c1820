use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Pinhole depth camera.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthCamera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub resolution: [usize; 2],
    /// Vertical field of view in radians.
    pub fov: f64,
    /// Standard deviation of depth noise along the view ray, in voxels.
    pub noise_sigma: f64,
    /// Radius of a point splat, in voxels.
    pub splat_radius: f64,
}

/// JSON form of a camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    #[serde(default = "default_res")]
    pub res_x: usize,
    #[serde(default = "default_res")]
    pub res_y: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_splat")]
    pub splat_radius: f64,
}

fn default_up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn default_fov() -> f64 {
    45.0
}
fn default_res() -> usize {
    50
}
fn default_splat() -> f64 {
    0.75
}

impl CameraConfig {
    pub fn build(&self) -> Result<DepthCamera> {
        DepthCamera::new(
            Vec3::from(self.position),
            Vec3::from(self.look_at),
            Vec3::from(self.up),
            [self.res_x, self.res_y],
            self.fov_deg.to_radians(),
            self.noise_sigma,
            self.splat_radius,
        )
    }
}

/// A pixel hit: the winning point and its distance from the camera.
#[derive(Clone, Copy, Debug)]
struct Hit {
    depth: f64,
    index: usize,
}

impl DepthCamera {
    pub fn new(
        position: Vec3,
        look_at: Vec3,
        up: Vec3,
        resolution: [usize; 2],
        fov: f64,
        noise_sigma: f64,
        splat_radius: f64,
    ) -> Result<Self> {
        if resolution[0] == 0 || resolution[1] == 0 {
            return Err(Error::Config("camera resolution must be at least 1x1".into()));
        }
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(Error::Config(format!("field of view must lie in (0, π), got {fov}")));
        }
        if !((position - look_at).norm() > 0.0) {
            return Err(Error::Config("camera position and look-at point coincide".into()));
        }
        if (look_at - position).cross(&up).norm() == 0.0 {
            return Err(Error::Config("camera up vector is parallel to the view direction".into()));
        }
        if noise_sigma < 0.0 || splat_radius < 0.0 {
            return Err(Error::Config("noise and splat radius must be non-negative".into()));
        }
        Ok(Self { position, look_at, up, resolution, fov, noise_sigma, splat_radius })
    }

    /// Orthonormal `(right, up, forward)` camera frame.
    pub fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.look_at - self.position).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        (right, up, forward)
    }

    /// Continuous pixel coordinates and depth along the optical axis.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let (right, up, forward) = self.frame();
        let d = p - self.position;
        let z = d.dot(&forward);
        if z <= 1e-9 {
            return None;
        }
        let t = (0.5 * self.fov).tan();
        let aspect = self.resolution[0] as f64 / self.resolution[1] as f64;
        let nx = d.dot(&right) / (z * t * aspect);
        let ny = d.dot(&up) / (z * t);
        let px = 0.5 * (nx + 1.0) * self.resolution[0] as f64;
        let py = 0.5 * (1.0 - ny) * self.resolution[1] as f64;
        Some((px, py, z))
    }

    /// Point-splat depth buffer: each point covers the pixels whose centers
    /// fall within its projected radius (`splat_radius · voxel`); every pixel
    /// keeps the nearest point. Returns indices of points visible in at least
    /// one pixel, in increasing order.
    pub fn visible(&self, points: &[Vec3], voxel: f64) -> Vec<usize> {
        let [w, h] = self.resolution;
        let mut buffer: Vec<Option<Hit>> = vec![None; w * h];
        let t = (0.5 * self.fov).tan();
        for (index, p) in points.iter().enumerate() {
            let Some((px, py, z)) = self.project(p) else { continue };
            let depth = (p - self.position).norm();
            let r = self.splat_radius * voxel / (z * t) * 0.5 * h as f64;
            let x0 = (px - r - 0.5).ceil().max(0.0);
            let x1 = (px + r - 0.5).floor().min(w as f64 - 1.0);
            let y0 = (py - r - 0.5).ceil().max(0.0);
            let y1 = (py + r - 0.5).floor().min(h as f64 - 1.0);
            if x0 <= x1 && y0 <= y1 {
                for iy in y0 as usize..=y1 as usize {
                    for ix in x0 as usize..=x1 as usize {
                        let (cx, cy) = (ix as f64 + 0.5, iy as f64 + 0.5);
                        if (cx - px).powi(2) + (cy - py).powi(2) <= r * r {
                            update(&mut buffer[iy * w + ix], depth, index);
                        }
                    }
                }
            }
        }
        let mut out: Vec<usize> = buffer.iter().flatten().map(|hit| hit.index).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Moves `p` along the view ray by Gaussian noise of standard deviation `noise_sigma · voxel`.
    pub fn add_noise(&self, p: &Vec3, voxel: f64, rng: &mut impl Rng) -> Vec3 {
        if self.noise_sigma == 0.0 {
            return *p;
        }
        let ray = (p - self.position).normalize();
        let n = Normal::new(0.0, self.noise_sigma * voxel).expect("finite sigma");
        p + ray * n.sample(rng)
    }
}

fn update(slot: &mut Option<Hit>, depth: f64, index: usize) {
    match slot {
        Some(h) if h.depth < depth || (h.depth == depth && h.index < index) => {}
        _ => *slot = Some(Hit { depth, index }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(res: usize) -> DepthCamera {
        DepthCamera::new(
            Vec3::new(0.0, -20.0, 0.0),
            Vec3::zeros(),
            Vec3::z(),
            [res, res],
            45f64.to_radians(),
            0.0,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn center_projects_to_image_center() {
        let c = cam(50);
        let (px, py, z) = c.project(&Vec3::zeros()).unwrap();
        assert!((px - 25.0).abs() < 1e-12 && (py - 25.0).abs() < 1e-12 && (z - 20.0).abs() < 1e-12);
        // +z is up in the image, so it maps to smaller row indices
        assert!(c.project(&Vec3::new(0.0, 0.0, 1.0)).unwrap().1 < 25.0);
        assert!(c.project(&Vec3::new(0.0, -30.0, 0.0)).is_none());
    }

    #[test]
    fn nearer_point_on_same_ray_wins() {
        let c = cam(50);
        let pts = [Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, -2.0, 0.0)];
        assert_eq!(c.visible(&pts, 1.0), vec![1]);
    }

    #[test]
    fn tripled_resolution_keeps_every_visible_point() {
        // pixel centers at resolution n are a subset of those at 3n
        let pts: Vec<Vec3> = (0..400)
            .map(|i| {
                let a = i as f64 * 0.37;
                Vec3::new(3.0 * a.sin(), (i % 7) as f64 - 3.0, 3.0 * (1.3 * a).cos())
            })
            .collect();
        let lo = cam(20).visible(&pts, 1.0);
        let hi = cam(60).visible(&pts, 1.0);
        assert!(lo.iter().all(|i| hi.contains(i)));
        assert!(hi.len() >= lo.len());
    }

    #[test]
    fn invalid_cameras_rejected() {
        assert!(DepthCamera::new(Vec3::zeros(), Vec3::zeros(), Vec3::z(), [1, 1], 1.0, 0.0, 0.5).is_err());
        assert!(DepthCamera::new(Vec3::x(), Vec3::zeros(), Vec3::z(), [0, 1], 1.0, 0.0, 0.5).is_err());
        assert!(DepthCamera::new(Vec3::x(), Vec3::zeros(), Vec3::z(), [1, 1], 4.0, 0.0, 0.5).is_err());
        assert!(DepthCamera::new(Vec3::z(), Vec3::zeros(), Vec3::z(), [1, 1], 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn config_round_trip() {
        let c: CameraConfig = serde_json::from_str(r#"{"position":[0,-20,0],"look_at":[0,0,0]}"#).unwrap();
        assert_eq!(c.res_x, 50);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<CameraConfig>(&s).unwrap(), c);
        assert!(serde_json::from_str::<CameraConfig>(r#"{"position":[0,0,1],"look_at":[0,0,0],"bogus":1}"#).is_err());
    }
}
