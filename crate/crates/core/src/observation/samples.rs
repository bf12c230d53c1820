use crate::grid::{surface_triangles, SimulationGrid};
use crate::math::{corner_offset, interpolate_scalar, interpolate_scalar_gradient, trilinear_weights, Vec3};

/// Sub-lattice resolution used for polygon centroids.
pub const SAMPLE_SUBDIVISION: usize = 2;

/// A point on the rest surface attached to an active cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub rest: Vec3,
    /// Active cell index.
    pub cell: usize,
    /// Local coordinates inside the cell.
    pub local: Vec3,
}

impl SurfaceSample {
    /// Position after displacing the owning cell's corners by `u`.
    pub fn displaced(&self, grid: &SimulationGrid, u: &[Vec3]) -> Vec3 {
        let w = trilinear_weights(&self.local);
        let dofs = grid.cell_dofs(self.cell);
        let mut offset = Vec3::zeros();
        for c in 0..8 {
            offset += u[dofs[c]] * w[c];
        }
        self.rest + offset
    }
}

// Newton steps along the gradient onto the trilinear zero set, kept inside the cell.
fn project_to_surface(phi: &[f64; 8], start: Vec3) -> Vec3 {
    let mut xi = start;
    for _ in 0..20 {
        let v = interpolate_scalar(phi, &xi);
        if v.abs() < 1e-13 {
            break;
        }
        let g = interpolate_scalar_gradient(phi, &xi);
        let g2 = g.norm_squared();
        if g2 < 1e-300 {
            break;
        }
        xi -= g * (v / g2);
        xi = xi.map(|c| c.clamp(0.0, 1.0));
    }
    xi
}

const CELL_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Deterministic samples of the rest surface: per surface cell, the centroids
/// of the polygon triangles on a 2³ sub-lattice projected onto the zero set,
/// plus the zero crossings on the 12 cell edges.
pub fn extract_surface_samples(grid: &SimulationGrid) -> Vec<SurfaceSample> {
    let sdf = grid.sdf();
    let h = grid.spacing();
    let mut out = Vec::new();
    for s in grid.surface_cells() {
        let cell = grid.active_cells()[s.cell];
        let phi = sdf.cell_corner_values(cell);
        let origin = sdf.cell_origin(cell);
        let mut push = |xi: Vec3| out.push(SurfaceSample { rest: origin + xi * h, cell: s.cell, local: xi });
        for tri in surface_triangles(&phi, SAMPLE_SUBDIVISION) {
            if tri.local_area() > 0.0 {
                push(project_to_surface(&phi, tri.centroid()));
            }
        }
        for (a, b) in CELL_EDGES {
            let (va, vb) = (phi[a], phi[b]);
            // edges where one end is strictly inside and the other is not
            if (va < 0.0) != (vb < 0.0) {
                let t = va / (va - vb);
                let oa = corner_offset(a);
                let ob = corner_offset(b);
                let pa = Vec3::new(oa[0] as f64, oa[1] as f64, oa[2] as f64);
                let pb = Vec3::new(ob[0] as f64, ob[1] as f64, ob[2] as f64);
                push(pa + (pb - pa) * t);
            }
        }
    }
    out
}
