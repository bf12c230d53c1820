use crate::math::{corner_sign, mat3_inf_norm, Mat3, Vec3};

pub const POLAR_MAX_ITERATIONS: usize = 20;
pub const POLAR_TOLERANCE: f64 = 1e-8;

/// Rotation extracted from the average deformation gradient of a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementRotation {
    pub r: Mat3,
    pub f: Mat3,
    /// Polar iterations performed; zero when the previous rotation was reused.
    pub iterations: usize,
    pub degenerate: bool,
}

impl ElementRotation {
    pub fn identity() -> Self {
        Self { r: Mat3::identity(), f: Mat3::identity(), iterations: 0, degenerate: false }
    }
}

/// `F = I + (1/4h) Σ_c u_c s_cᵀ` with `s_c` the corner sign pattern.
pub fn deformation_gradient(u: &[Vec3; 8], h: f64) -> Mat3 {
    let mut f = Mat3::identity();
    for (c, uc) in u.iter().enumerate() {
        f += uc * corner_sign(c).transpose() / (4.0 * h);
    }
    f
}

/// Rotation factor of `F = RS` by the iteration `R ← ½(R + R⁻ᵀ)` from `R₀ = F`.
/// Returns `None` for `det F ≤ 0`.
pub fn polar_rotation(f: &Mat3) -> Option<(Mat3, usize)> {
    if !(f.determinant() > 0.0) {
        return None;
    }
    let mut r = *f;
    for it in 1..=POLAR_MAX_ITERATIONS {
        let inv_t = r.try_inverse()?.transpose();
        let next = (r + inv_t) * 0.5;
        let delta = mat3_inf_norm(&(next - r));
        r = next;
        if delta < POLAR_TOLERANCE {
            return Some((r, it));
        }
    }
    Some((r, POLAR_MAX_ITERATIONS))
}

/// Rotation of a cell with corner displacements `u`; reuses `fallback` when
/// the cell is inverted.
pub fn compute_corotation(u: &[Vec3; 8], h: f64, fallback: &Mat3) -> ElementRotation {
    let f = deformation_gradient(u, h);
    match polar_rotation(&f) {
        Some((r, iterations)) => ElementRotation { r, f, iterations, degenerate: false },
        None => ElementRotation { r: *fallback, f, iterations: 0, degenerate: true },
    }
}

/// Pulls an adjoint `R̂` back through `iterations` polar steps started at `F`.
pub fn polar_rotation_adjoint(f: &Mat3, iterations: usize, r_hat: &Mat3) -> Mat3 {
    let mut iterates = Vec::with_capacity(iterations);
    let mut r = *f;
    for _ in 0..iterations {
        iterates.push(r);
        let inv_t = r.try_inverse().map(|m| m.transpose()).unwrap_or_else(Mat3::zeros);
        r = (r + inv_t) * 0.5;
    }
    let mut g = *r_hat;
    for rk in iterates.iter().rev() {
        let inv_t = rk.try_inverse().map(|m| m.transpose()).unwrap_or_else(Mat3::zeros);
        g = (g - inv_t * g.transpose() * inv_t) * 0.5;
    }
    g
}

/// Adds `(1/4h) F̂ s_c` to each corner adjoint.
pub fn deformation_gradient_adjoint(f_hat: &Mat3, h: f64, u_hat: &mut [Vec3; 8]) {
    for (c, uc) in u_hat.iter_mut().enumerate() {
        *uc += f_hat * corner_sign(c) / (4.0 * h);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::corner_offset;
    use nalgebra::{Rotation3, Unit};

    fn rest(h: f64) -> [Vec3; 8] {
        std::array::from_fn(|c| {
            let o = corner_offset(c);
            Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64) * h + Vec3::new(3.0, -1.0, 2.0)
        })
    }

    #[test]
    fn zero_displacement_is_identity() {
        let rot = compute_corotation(&[Vec3::zeros(); 8], 1.0, &Mat3::identity());
        assert_eq!(rot.f, Mat3::identity());
        assert!((rot.r - Mat3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn rigid_rotation_recovered() {
        let q = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(1.0, 2.0, -0.5)), 0.9).into_inner();
        let x = rest(0.7);
        let u = x.map(|p| (q - Mat3::identity()) * p);
        let rot = compute_corotation(&u, 0.7, &Mat3::identity());
        assert!((rot.r - q).abs().max() < 1e-6);
        assert!(mat3_inf_norm(&(rot.r.transpose() * rot.r - Mat3::identity())) < 1e-6);
    }

    #[test]
    fn uniform_scaling_has_no_rotation() {
        let x = rest(1.0);
        let u = x.map(|p| p * 0.1);
        let rot = compute_corotation(&u, 1.0, &Mat3::identity());
        assert!((rot.r - Mat3::identity()).abs().max() < 1e-12);
        let s = rot.r.transpose() * rot.f;
        assert!((s - s.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn inverted_cell_falls_back() {
        let x = rest(1.0);
        let u = x.map(|p| Vec3::new(-2.0 * p[0], 0.0, 0.0));
        let prev = Rotation3::from_axis_angle(&Vec3::z_axis(), 0.3).into_inner();
        let rot = compute_corotation(&u, 1.0, &prev);
        assert!(rot.degenerate);
        assert_eq!(rot.r, prev);
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let f = Mat3::new(1.1, 0.3, -0.2, -0.25, 0.9, 0.1, 0.15, 0.05, 1.2);
        let (_, it) = polar_rotation(&f).unwrap();
        let w = Mat3::new(0.3, -1.0, 0.2, 0.5, 0.1, -0.7, 0.9, 0.4, -0.2);
        let g = polar_rotation_adjoint(&f, it, &w);
        let run = |m: &Mat3| {
            let mut r = *m;
            for _ in 0..it {
                r = (r + r.try_inverse().unwrap().transpose()) * 0.5;
            }
            r.component_mul(&w).sum()
        };
        let eps = 1e-6;
        for a in 0..3 {
            for b in 0..3 {
                let mut p = f;
                let mut m = f;
                p[(a, b)] += eps;
                m[(a, b)] -= eps;
                let fd = (run(&p) - run(&m)) / (2.0 * eps);
                assert!((fd - g[(a, b)]).abs() < 1e-8, "{a}{b}: {fd} vs {}", g[(a, b)]);
            }
        }
    }
}
