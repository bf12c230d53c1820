use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::extension::ExtendedDisplacementField;
use crate::grid::SimulationGrid;
use crate::math::{interpolate_scalar, interpolate_vec, trilinear_weight_gradients, Mat3, Vec3};

pub const NEWTON_MAX_ITERATIONS: usize = 20;
/// Newton converges when `‖f‖ < NEWTON_TOLERANCE · h`.
pub const NEWTON_TOLERANCE: f64 = 1e-9;
/// Accepted overshoot of the local coordinates. Coordinates inside the tolerance
/// are kept unclamped so the matched SDF value stays differentiable.
pub const CELL_EPSILON: f64 = 1e-6;

/// How to choose among several cells containing a preimage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest interpolated SDF value.
    #[default]
    MostNegative,
    /// Smallest absolute interpolated SDF value.
    SmallestMagnitude,
}

/// `∂X/∂ξ` of the trilinear map through `corners`.
pub fn trilinear_jacobian(corners: &[Vec3; 8], xi: &Vec3) -> Mat3 {
    let g = trilinear_weight_gradients(xi);
    let mut j = Mat3::zeros();
    for c in 0..8 {
        j += corners[c] * g[c].transpose();
    }
    j
}

/// Local coordinates `ξ ∈ [0,1]³` with `interpolate(corners, ξ) = x`, by Newton's
/// method from the cell center. `h` sets the absolute tolerance.
pub fn invert_trilinear(x: &Vec3, corners: &[Vec3; 8], h: f64) -> Option<Vec3> {
    let mut xi = Vec3::repeat(0.5);
    let tol = NEWTON_TOLERANCE * h;
    for _ in 0..=NEWTON_MAX_ITERATIONS {
        let f = interpolate_vec(corners, &xi) - x;
        let j = trilinear_jacobian(corners, &xi);
        if !(j.determinant().abs() > 1e-12 * h * h * h) {
            return None;
        }
        if f.norm() < tol {
            let inside = xi.iter().all(|&c| (-CELL_EPSILON..=1.0 + CELL_EPSILON).contains(&c));
            return inside.then_some(xi);
        }
        xi -= j.lu().solve(&f)?;
        if !xi.iter().all(|c| c.is_finite()) || xi.amax() > 1e3 {
            return None;
        }
    }
    None
}

/// Outcome of matching one observed point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMatch {
    pub x: Vec3,
    /// Lattice cell index; meaningful only when matched.
    pub cell: usize,
    pub local: Vec3,
    /// Interpolated rest SDF at `local`, or `φ_max` when unmatched.
    pub phi: f64,
    pub matched: bool,
}

impl PointMatch {
    pub fn unmatched(x: Vec3, phi_max: f64) -> Self {
        Self { x, cell: usize::MAX, local: Vec3::zeros(), phi: phi_max, matched: false }
    }

    /// `½ φ²` for matched points, `½ φ_max²` otherwise.
    pub fn cost(&self, phi_max: f64) -> f64 {
        if self.matched {
            0.5 * self.phi * self.phi
        } else {
            0.5 * phi_max * phi_max
        }
    }
}

/// Active and band cells of one frame in deformed configuration, bucketed for lookup.
#[derive(Clone, Debug)]
pub struct DeformedCells {
    pub h: f64,
    pub phi_max: f64,
    /// Lattice cell indices in increasing order.
    pub cells: Vec<usize>,
    pub corners: Vec<[Vec3; 8]>,
    pub phi: Vec<[f64; 8]>,
    lower: Vec<Vec3>,
    upper: Vec<Vec3>,
    origin: Vec3,
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl DeformedCells {
    pub fn new(grid: &SimulationGrid, field: &ExtendedDisplacementField) -> Self {
        let sdf = grid.sdf();
        let h = grid.spacing();
        let mut cells: Vec<usize> = grid.active_cells().iter().map(|&c| sdf.cell_index(c)).collect();
        cells.extend(&field.band_cells);
        cells.sort_unstable();
        let origin = sdf.origin();
        let inflate = Vec3::repeat(1e-6 * h);
        let mut out = Self {
            h,
            phi_max: field.phi_max,
            cells: Vec::with_capacity(cells.len()),
            corners: Vec::with_capacity(cells.len()),
            phi: Vec::with_capacity(cells.len()),
            lower: Vec::with_capacity(cells.len()),
            upper: Vec::with_capacity(cells.len()),
            origin,
            buckets: HashMap::new(),
        };
        for c in cells {
            let coords = sdf.cell_coords(c);
            let nodes = sdf.cell_corner_nodes(coords);
            let corners: [Vec3; 8] = std::array::from_fn(|k| sdf.node_position(nodes[k]) + field.values[nodes[k]]);
            let mut lo = corners[0];
            let mut hi = corners[0];
            for p in &corners[1..] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            lo -= inflate;
            hi += inflate;
            let id = out.cells.len() as u32;
            let (a, b) = (out.bucket(&lo), out.bucket(&hi));
            for i in a[0]..=b[0] {
                for j in a[1]..=b[1] {
                    for k in a[2]..=b[2] {
                        out.buckets.entry([i, j, k]).or_default().push(id);
                    }
                }
            }
            out.cells.push(c);
            out.corners.push(corners);
            out.phi.push(sdf.cell_corner_values(coords));
            out.lower.push(lo);
            out.upper.push(hi);
        }
        out
    }

    fn bucket(&self, p: &Vec3) -> [i64; 3] {
        let q = (p - self.origin) / self.h;
        [q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64]
    }

    /// Candidate slots whose inflated deformed bounding box contains `x`.
    pub fn candidates(&self, x: &Vec3) -> impl Iterator<Item = usize> + '_ {
        let x = *x;
        self.buckets
            .get(&self.bucket(&x))
            .into_iter()
            .flatten()
            .map(|&i| i as usize)
            .filter(move |&i| (0..3).all(|a| self.lower[i][a] <= x[a] && x[a] <= self.upper[i][a]))
    }

    /// Matches `x` against every candidate cell; among preimages with
    /// `|φ| < φ_max` picks the best by `tie`, then by lowest cell index.
    pub fn match_point(&self, x: &Vec3, tie: TieBreak) -> PointMatch {
        let mut best: Option<(f64, usize, PointMatch)> = None;
        for i in self.candidates(x) {
            let Some(xi) = invert_trilinear(x, &self.corners[i], self.h) else { continue };
            let phi = interpolate_scalar(&self.phi[i], &xi);
            if !(phi.abs() < self.phi_max) {
                continue;
            }
            let key = match tie {
                TieBreak::MostNegative => phi,
                TieBreak::SmallestMagnitude => phi.abs(),
            };
            let m = PointMatch { x: *x, cell: self.cells[i], local: xi, phi, matched: true };
            let better = match &best {
                None => true,
                Some((k, c, _)) => key < *k || (key == *k && self.cells[i] < *c),
            };
            if better {
                best = Some((key, self.cells[i], m));
            }
        }
        best.map_or_else(|| PointMatch::unmatched(*x, self.phi_max), |b| b.2)
    }

    /// Slot of a lattice cell index.
    pub fn slot(&self, cell: usize) -> Option<usize> {
        self.cells.binary_search(&cell).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::trilinear_weights;

    fn unit_cell(h: f64, origin: Vec3) -> [Vec3; 8] {
        std::array::from_fn(|c| origin + Vec3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64) * h)
    }

    #[test]
    fn identity_cell() {
        let o = Vec3::new(1.0, -2.0, 0.5);
        let h = 0.7;
        let xi = invert_trilinear(&(o + Vec3::new(0.3, 0.5, 0.7) * h), &unit_cell(h, o), h).unwrap();
        assert!((xi - Vec3::new(0.3, 0.5, 0.7)).amax() < 1e-12);
    }

    #[test]
    fn affine_cell_round_trip() {
        let a = Mat3::new(1.1, 0.2, -0.1, 0.05, 0.9, 0.3, -0.2, 0.1, 1.3);
        let b = Vec3::new(0.4, -0.3, 2.0);
        let corners = unit_cell(1.0, Vec3::zeros()).map(|p| a * p + b);
        let target = Vec3::repeat(0.25);
        let x = interpolate_vec(&corners, &target);
        let xi = invert_trilinear(&x, &corners, 1.0).unwrap();
        assert!((xi - target).amax() < 1e-9);
    }

    #[test]
    fn outside_point_has_no_preimage() {
        let mut corners = unit_cell(1.0, Vec3::zeros());
        corners[7] += Vec3::new(0.3, 0.2, 0.4);
        corners[2] -= Vec3::new(0.1, 0.0, 0.2);
        let x = Vec3::new(1.6, 0.5, 0.5);
        assert!(invert_trilinear(&x, &corners, 1.0).is_none());
        // dense oracle: no lattice sample of [0,1]³ maps near x
        let n = 64;
        let mut closest = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let xi = Vec3::new(i as f64, j as f64, k as f64) / n as f64;
                    closest = closest.min((interpolate_vec(&corners, &xi) - x).norm());
                }
            }
        }
        assert!(closest > 0.1);
    }

    #[test]
    fn collapsed_cell_is_rejected() {
        let corners = unit_cell(1.0, Vec3::zeros()).map(|p| Vec3::new(p.x, p.y, 0.0));
        assert!(invert_trilinear(&Vec3::new(0.5, 0.5, 0.0), &corners, 1.0).is_none());
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let mut corners = unit_cell(1.0, Vec3::zeros());
        corners[5] += Vec3::new(0.2, -0.1, 0.3);
        let xi = Vec3::new(0.2, 0.6, 0.35);
        let j = trilinear_jacobian(&corners, &xi);
        let e = 1e-7;
        for a in 0..3 {
            let mut d = Vec3::zeros();
            d[a] = e;
            let fd = (interpolate_vec(&corners, &(xi + d)) - interpolate_vec(&corners, &(xi - d))) / (2.0 * e);
            assert!((fd - j.column(a)).norm() < 1e-8);
        }
        let w = trilinear_weights(&xi);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
