use crate::dynamics::collision::plane_normal_derivatives;
use crate::dynamics::{Contact, GroundPlane};
use crate::math::{softmin, softmin_zero_derivative, Vec3};

/// Adjoints produced by one contact point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactAdjoint {
    /// Adjoint of the interpolated contact position.
    pub position: Vec3,
    /// Adjoint of the interpolated contact velocity.
    pub velocity: Vec3,
    pub height: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Reverse of `f̄ = −k_c [softmin(0, d) + θΔt σ(−αd) (n·ẋ)] n` with `d = n·x − H`,
/// given the adjoint `f_hat` of `f̄`.
pub fn adjoint_contact(contact: &Contact, plane: &GroundPlane, theta_dt: f64, f_hat: &Vec3) -> ContactAdjoint {
    let n = plane.normal();
    let (alpha, kc) = (plane.softness, plane.stiffness);
    let d = contact.distance;
    let s = softmin(0.0, d, alpha);
    let g = softmin_zero_derivative(d, alpha);
    let q = n.dot(&contact.velocity);
    let bracket = s + theta_dt * g * q;
    let mut n_hat = -f_hat * (kc * bracket);
    let b_hat = -kc * f_hat.dot(&n);
    let g_hat = b_hat * theta_dt * q;
    let q_hat = b_hat * theta_dt * g;
    // d/dd softmin(0, d) = σ(−αd) = g and dg/dd = −α g (1 − g)
    let d_hat = b_hat * g + g_hat * (-alpha * g * (1.0 - g));
    n_hat += contact.position * d_hat + contact.velocity * q_hat;
    let (dn_dtheta, dn_dphi) = plane_normal_derivatives(plane.theta, plane.phi);
    ContactAdjoint {
        position: n * d_hat,
        velocity: n * q_hat,
        height: -d_hat,
        theta: n_hat.dot(&dn_dtheta),
        phi: n_hat.dot(&dn_dphi),
    }
}
