//! Integration weights for cells cut by the zero level set of the trilinear SDF.
//!
//! Volume weights use octree subdivision of the unit cell. A trilinear function
//! attains its extrema at box vertices, so a sub-box whose corners share a sign
//! is exactly inside or outside and is integrated in closed form; mixed boxes
//! are refined down to [`VOLUME_DEPTH`] and classified by their midpoint.
//!
//! Surface weights polygonize the zero set with marching tetrahedra on a
//! regular sub-lattice of the cell and integrate each triangle with the
//! three edge-midpoint rule.

use crate::error::{Error, Result};
use crate::math::{corner_offset, interpolate_scalar, interpolate_scalar_gradient, trilinear_weights, Vec3};

pub const VOLUME_DEPTH: u32 = 4;
pub const SURFACE_SUBDIVISION: usize = 4;

/// `w_v(e, i) = ∫_{Ω^e} N_i dx` with `Ω^e = {φ ≤ 0}` inside the cell.
pub fn cell_volume_weights(corner_sdf: &[f64; 8], h: f64) -> [f64; 8] {
    let mut w = [0.0; 8];
    if corner_sdf.iter().all(|&v| v > 0.0) {
        return w;
    }
    accumulate_volume(corner_sdf, [0.0; 3], 1.0, VOLUME_DEPTH, &mut w);
    let h3 = h * h * h;
    for v in w.iter_mut() {
        *v *= h3;
    }
    w
}

fn accumulate_volume(phi: &[f64; 8], lo: [f64; 3], size: f64, depth: u32, w: &mut [f64; 8]) {
    let mut sub = [0.0; 8];
    for (c, s) in sub.iter_mut().enumerate() {
        let o = corner_offset(c);
        let p = Vec3::new(
            lo[0] + size * o[0] as f64,
            lo[1] + size * o[1] as f64,
            lo[2] + size * o[2] as f64,
        );
        *s = interpolate_scalar(phi, &p);
    }
    let inside = sub.iter().all(|&v| v <= 0.0);
    let outside = sub.iter().all(|&v| v > 0.0);
    if outside {
        return;
    }
    if inside {
        add_box_integrals(lo, size, w);
        return;
    }
    if depth == 0 {
        let mid = Vec3::new(lo[0] + 0.5 * size, lo[1] + 0.5 * size, lo[2] + 0.5 * size);
        if interpolate_scalar(phi, &mid) <= 0.0 {
            add_box_integrals(lo, size, w);
        }
        return;
    }
    let half = 0.5 * size;
    for c in 0..8 {
        let o = corner_offset(c);
        let child = [
            lo[0] + half * o[0] as f64,
            lo[1] + half * o[1] as f64,
            lo[2] + half * o[2] as f64,
        ];
        accumulate_volume(phi, child, half, depth - 1, w);
    }
}

/// Exact integrals of the 8 unit-cell basis functions over an axis-aligned box.
fn add_box_integrals(lo: [f64; 3], size: f64, w: &mut [f64; 8]) {
    let mut one = [0.0; 3];
    let mut lin = [0.0; 3];
    for a in 0..3 {
        let (a0, a1) = (lo[a], lo[a] + size);
        lin[a] = 0.5 * (a1 * a1 - a0 * a0);
        one[a] = (a1 - a0) - lin[a];
    }
    for (c, wc) in w.iter_mut().enumerate() {
        let o = corner_offset(c);
        let mut v = 1.0;
        for a in 0..3 {
            v *= if o[a] == 1 { lin[a] } else { one[a] };
        }
        *wc += v;
    }
}

/// A triangle of the polygonized zero set in local cell coordinates,
/// tagged with the sub-cell it was generated in.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceTriangle {
    pub sub_cell: usize,
    pub vertices: [Vec3; 3],
}

impl SurfaceTriangle {
    /// Area in local (unit-cell) coordinates.
    pub fn local_area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }
}

// Six tetrahedra sharing the 0-7 diagonal of a cube.
const CUBE_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 6, 4, 7],
    [0, 4, 5, 7],
    [0, 5, 1, 7],
];

/// True when the corner values contain both a strictly inside (`< 0`) and a
/// non-inside (`≥ 0`) node. Zero corners count as surface so that a level set
/// passing exactly through lattice nodes still produces a patch in the cell
/// on its inner side.
pub fn has_sign_change(corner_sdf: &[f64; 8]) -> bool {
    corner_sdf.iter().any(|&v| v < 0.0) && corner_sdf.iter().any(|&v| v >= 0.0)
}

/// Marching-tetrahedra polygonization of the trilinear zero set on a
/// `subdivision^3` sub-lattice of the unit cell.
pub fn surface_triangles(corner_sdf: &[f64; 8], subdivision: usize) -> Vec<SurfaceTriangle> {
    let mut out = Vec::new();
    if !has_sign_change(corner_sdf) {
        return out;
    }
    let s = subdivision.max(1);
    let step = 1.0 / s as f64;
    for sk in 0..s {
        for sj in 0..s {
            for si in 0..s {
                let sub_cell = si + s * (sj + s * sk);
                let lo = Vec3::new(si as f64, sj as f64, sk as f64) * step;
                let mut pos = [Vec3::zeros(); 8];
                let mut val = [0.0; 8];
                for c in 0..8 {
                    let o = corner_offset(c);
                    pos[c] = lo + Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64) * step;
                    val[c] = interpolate_scalar(corner_sdf, &pos[c]);
                }
                if !has_sign_change(&val) {
                    continue;
                }
                for tet in CUBE_TETS {
                    polygonize_tet(corner_sdf, &tet.map(|c| pos[c]), &tet.map(|c| val[c]), sub_cell, &mut out);
                }
            }
        }
    }
    out
}

fn polygonize_tet(phi: &[f64; 8], p: &[Vec3; 4], v: &[f64; 4], sub_cell: usize, out: &mut Vec<SurfaceTriangle>) {
    let inside: Vec<usize> = (0..4).filter(|&i| v[i] < 0.0).collect();
    let outside: Vec<usize> = (0..4).filter(|&i| v[i] >= 0.0).collect();
    let cross = |a: usize, b: usize| edge_root(phi, &p[a], &p[b], v[a], v[b]);
    match (inside.len(), outside.len()) {
        (1, 3) | (3, 1) => {
            let (lone, others) = if inside.len() == 1 { (inside[0], &outside) } else { (outside[0], &inside) };
            out.push(SurfaceTriangle {
                sub_cell,
                vertices: [cross(lone, others[0]), cross(lone, others[1]), cross(lone, others[2])],
            });
        }
        (2, 2) => {
            let (a, b) = (inside[0], inside[1]);
            let (c, d) = (outside[0], outside[1]);
            let q = [cross(a, c), cross(a, d), cross(b, d), cross(b, c)];
            out.push(SurfaceTriangle { sub_cell, vertices: [q[0], q[1], q[2]] });
            out.push(SurfaceTriangle { sub_cell, vertices: [q[0], q[2], q[3]] });
        }
        _ => {}
    }
}

/// Zero of the trilinear interpolant on the segment `a → b`, given endpoint
/// values of opposite sign. Along axis-aligned edges the interpolant is
/// linear and the first secant step is exact; along diagonals it is cubic and
/// is refined by Illinois false position.
pub fn edge_root(phi: &[f64; 8], a: &Vec3, b: &Vec3, va: f64, vb: f64) -> Vec3 {
    let (mut t0, mut t1, mut f0, mut f1) = (0.0, 1.0, va, vb);
    let mut side = 0;
    let mut t = f0 / (f0 - f1);
    for _ in 0..100 {
        t = (t0 * f1 - t1 * f0) / (f1 - f0);
        let ft = interpolate_scalar(phi, &(a + (b - a) * t));
        if ft == 0.0 || (t1 - t0).abs() < 1e-14 {
            break;
        }
        if (ft < 0.0) == (f0 < 0.0) {
            t0 = t;
            f0 = ft;
            if side == -1 {
                f1 *= 0.5;
            }
            side = -1;
        } else {
            t1 = t;
            f1 = ft;
            if side == 1 {
                f0 *= 0.5;
            }
            side = 1;
        }
        if ft.abs() < 1e-15 {
            break;
        }
    }
    a + (b - a) * t
}

/// Surface quadrature data for one cut cell.
#[derive(Clone, Debug)]
pub struct BoundaryQuadrature {
    /// `w_b(e, i) = ∫_{Γ^e} N_i ds` in world units (area).
    pub weights: [f64; 8],
    /// Area-averaged outward unit normal of the patch.
    pub normal: Vec3,
    pub area: f64,
    /// Area-weighted centroid of the patch in local coordinates.
    pub centroid: Vec3,
}

pub fn cell_boundary_weights(corner_sdf: &[f64; 8], h: f64) -> Result<BoundaryQuadrature> {
    if !has_sign_change(corner_sdf) {
        return Err(Error::NotBoundaryCell);
    }
    let tris = surface_triangles(corner_sdf, SURFACE_SUBDIVISION);
    let mut weights = [0.0; 8];
    let mut grad_sum = Vec3::zeros();
    let mut centroid = Vec3::zeros();
    let mut local_area = 0.0;
    for tri in &tris {
        let a = tri.local_area();
        if a == 0.0 {
            continue;
        }
        let [p0, p1, p2] = tri.vertices;
        for mid in [(p0 + p1) * 0.5, (p1 + p2) * 0.5, (p2 + p0) * 0.5] {
            let n = trilinear_weights(&mid);
            for c in 0..8 {
                weights[c] += a / 3.0 * n[c];
            }
        }
        grad_sum += interpolate_scalar_gradient(corner_sdf, &tri.centroid()) * a;
        centroid += tri.centroid() * a;
        local_area += a;
    }
    let h2 = h * h;
    for w in weights.iter_mut() {
        *w *= h2;
    }
    let normal = if grad_sum.norm() > 0.0 {
        grad_sum.normalize()
    } else {
        // degenerate patch (zero set touches the cell only at isolated points)
        let g = interpolate_scalar_gradient(corner_sdf, &Vec3::repeat(0.5));
        if g.norm() > 0.0 { g.normalize() } else { Vec3::z() }
    };
    let centroid = if local_area > 0.0 { centroid / local_area } else { Vec3::repeat(0.5) };
    Ok(BoundaryQuadrature { weights, normal, area: local_area * h2, centroid })
}
