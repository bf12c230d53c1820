//! Small vector helpers and the trilinear basis shared by every module.
//!
//! Cell corners are numbered `c = bx + 2*by + 4*bz` where `(bx, by, bz)` is the
//! corner offset within the cell.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Offset of corner `c` inside its cell, each component 0 or 1.
#[inline]
pub fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// `2*offset - 1`, the sign pattern used by the average deformation gradient.
#[inline]
pub fn corner_sign(c: usize) -> Vec3 {
    let o = corner_offset(c);
    Vec3::new(
        2.0 * o[0] as f64 - 1.0,
        2.0 * o[1] as f64 - 1.0,
        2.0 * o[2] as f64 - 1.0,
    )
}

/// Trilinear basis values at local coordinates `xi` in `[0,1]^3`.
#[inline]
pub fn trilinear_weights(xi: &Vec3) -> [f64; 8] {
    let mut w = [0.0; 8];
    for (c, wc) in w.iter_mut().enumerate() {
        let o = corner_offset(c);
        let mut v = 1.0;
        for a in 0..3 {
            v *= if o[a] == 1 { xi[a] } else { 1.0 - xi[a] };
        }
        *wc = v;
    }
    w
}

/// Derivatives of the trilinear basis with respect to the local coordinates.
/// `out[c][a] = d N_c / d xi_a`.
#[inline]
pub fn trilinear_weight_gradients(xi: &Vec3) -> [Vec3; 8] {
    let mut g = [Vec3::zeros(); 8];
    for (c, gc) in g.iter_mut().enumerate() {
        let o = corner_offset(c);
        let f = |a: usize| if o[a] == 1 { xi[a] } else { 1.0 - xi[a] };
        let d = |a: usize| if o[a] == 1 { 1.0 } else { -1.0 };
        *gc = Vec3::new(d(0) * f(1) * f(2), f(0) * d(1) * f(2), f(0) * f(1) * d(2));
    }
    g
}

#[inline]
pub fn interpolate_scalar(values: &[f64; 8], xi: &Vec3) -> f64 {
    trilinear_weights(xi)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

#[inline]
pub fn interpolate_vec(values: &[Vec3; 8], xi: &Vec3) -> Vec3 {
    let w = trilinear_weights(xi);
    let mut out = Vec3::zeros();
    for c in 0..8 {
        out += values[c] * w[c];
    }
    out
}

/// Gradient (in local coordinates) of the trilinear interpolant of `values`.
#[inline]
pub fn interpolate_scalar_gradient(values: &[f64; 8], xi: &Vec3) -> Vec3 {
    let g = trilinear_weight_gradients(xi);
    let mut out = Vec3::zeros();
    for c in 0..8 {
        out += g[c] * values[c];
    }
    out
}

/// Numerically stable `softmin_alpha(a, b) = -ln(exp(-a alpha) + exp(-b alpha)) / alpha`.
#[inline]
pub fn softmin(a: f64, b: f64, alpha: f64) -> f64 {
    let lo = a.min(b);
    let hi = a.max(b);
    lo - (-(hi - lo) * alpha).exp().ln_1p() / alpha
}

/// `d softmin(0, x) / dx`, equal to the logistic function of `-alpha x`.
#[inline]
pub fn softmin_zero_derivative(x: f64, alpha: f64) -> f64 {
    let z = -alpha * x;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Infinity norm of a 3x3 matrix (max absolute row sum).
pub fn mat3_inf_norm(m: &Mat3) -> f64 {
    (0..3)
        .map(|r| (0..3).map(|c| m[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
