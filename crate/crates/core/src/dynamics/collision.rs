use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{softmin, softmin_zero_derivative, Vec3};

/// Unit normal `(sinθ cosφ, sinθ sinφ, cosθ)`; `θ = 0` points along +z.
pub fn plane_normal(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

/// `(∂n/∂θ, ∂n/∂φ)`.
pub fn plane_normal_derivatives(theta: f64, phi: f64) -> (Vec3, Vec3) {
    (
        Vec3::new(theta.cos() * phi.cos(), theta.cos() * phi.sin(), -theta.sin()),
        Vec3::new(-theta.sin() * phi.sin(), theta.sin() * phi.cos(), 0.0),
    )
}

/// Penalty ground plane `{x : n·x = height}`; the free side is `n·x > height`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundPlane {
    pub height: f64,
    pub theta: f64,
    pub phi: f64,
    /// Spring stiffness `k_c` per unit area.
    pub stiffness: f64,
    /// Soft-min sharpness `α` (1/length).
    pub softness: f64,
}

impl GroundPlane {
    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0) || !(self.softness > 0.0) {
            return Err(Error::Config(format!(
                "ground stiffness and softness must be positive, got {} and {}",
                self.stiffness, self.softness
            )));
        }
        Ok(())
    }

    pub fn normal(&self) -> Vec3 {
        plane_normal(self.theta, self.phi)
    }

    /// Signed distance to the plane; negative means penetration.
    pub fn distance(&self, x: &Vec3) -> f64 {
        self.normal().dot(x) - self.height
    }
}

/// `f_c = −k_c · softmin_α(0, d) · n`.
pub fn collision_force(x: &Vec3, plane: &GroundPlane) -> Vec3 {
    let d = plane.distance(x);
    -plane.normal() * (plane.stiffness * softmin(0.0, d, plane.softness))
}

/// Time derivative of the collision force for a point moving with velocity `xdot`.
pub fn collision_force_rate(x: &Vec3, xdot: &Vec3, plane: &GroundPlane) -> Vec3 {
    let n = plane.normal();
    let g = softmin_zero_derivative(plane.distance(x), plane.softness);
    -n * (plane.stiffness * g * n.dot(xdot))
}

/// `f⁽ⁿ⁾ ≈ f⁽ⁿ⁻¹⁾ + Δt ∂f⁽ⁿ⁻¹⁾/∂t`.
pub fn extrapolate_collision_force(f_prev: &Vec3, dfdt_prev: &Vec3, dt: f64) -> Vec3 {
    f_prev + dfdt_prev * dt
}
