use serde::{Deserialize, Serialize};

use super::quadrature::{cell_boundary_weights, cell_volume_weights, has_sign_change, BoundaryQuadrature};
use super::sdf::SignedDistanceGrid;
use crate::error::{Error, Result};
use crate::math::{trilinear_weights, Vec3};

/// Region of space where the displacement is prescribed (to zero).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirichletRegion {
    #[default]
    None,
    /// Axis-aligned box, inclusive.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Points with `(x - point)·normal <= 0`.
    HalfSpace { point: [f64; 3], normal: [f64; 3] },
}

impl DirichletRegion {
    pub fn contains(&self, x: &Vec3) -> bool {
        match self {
            DirichletRegion::None => false,
            DirichletRegion::Box { min, max } => (0..3).all(|a| x[a] >= min[a] && x[a] <= max[a]),
            DirichletRegion::HalfSpace { point, normal } => {
                let p = Vec3::from_column_slice(point);
                let n = Vec3::from_column_slice(normal);
                (x - p).dot(&n) <= 0.0
            }
        }
    }
}

/// A cut cell carrying part of the object surface.
#[derive(Clone, Debug)]
pub struct SurfaceCell {
    /// Index into [`SimulationGrid::active_cells`].
    pub cell: usize,
    pub quadrature: BoundaryQuadrature,
    pub dirichlet: bool,
}

/// Lower bound for volume weights of active cells, relative to `h³/8`.
/// Keeps every degree of freedom attached to some mass and stiffness.
pub const MIN_WEIGHT_FRACTION: f64 = 1e-3;

/// Embedded hexahedral discretization of the object described by an SDF.
#[derive(Clone, Debug)]
pub struct SimulationGrid {
    sdf: SignedDistanceGrid,
    active_cells: Vec<[usize; 3]>,
    /// Lattice cell index to active index.
    cell_lookup: Vec<Option<usize>>,
    /// Lattice node index to DOF index.
    node_map: Vec<Option<usize>>,
    dof_nodes: Vec<usize>,
    cell_dofs: Vec<[usize; 8]>,
    volume_weights: Vec<[f64; 8]>,
    surface_cells: Vec<SurfaceCell>,
    rest_positions: Vec<Vec3>,
}

impl SimulationGrid {
    pub fn new(sdf: SignedDistanceGrid, dirichlet: &DirichletRegion) -> Result<Self> {
        if !sdf.values().iter().any(|&v| v < 0.0) {
            return Err(Error::Construction("object is empty: no node has a negative SDF value".into()));
        }
        let h = sdf.spacing();
        let [cx, cy, cz] = sdf.cell_dims();
        let mut active_cells = Vec::new();
        let mut cell_lookup = vec![None; cx * cy * cz];
        let mut node_used = vec![false; sdf.node_count()];
        for k in 0..cz {
            for j in 0..cy {
                for i in 0..cx {
                    let cell = [i, j, k];
                    if sdf.cell_corner_values(cell).iter().any(|&v| v < 0.0) {
                        cell_lookup[sdf.cell_index(cell)] = Some(active_cells.len());
                        active_cells.push(cell);
                        for n in sdf.cell_corner_nodes(cell) {
                            node_used[n] = true;
                        }
                    }
                }
            }
        }
        let mut node_map = vec![None; sdf.node_count()];
        let mut dof_nodes = Vec::new();
        for (n, used) in node_used.iter().enumerate() {
            if *used {
                node_map[n] = Some(dof_nodes.len());
                dof_nodes.push(n);
            }
        }
        let rest_positions = dof_nodes.iter().map(|&n| sdf.node_position(n)).collect();
        let floor = MIN_WEIGHT_FRACTION * h * h * h / 8.0;
        let mut cell_dofs = Vec::with_capacity(active_cells.len());
        let mut volume_weights = Vec::with_capacity(active_cells.len());
        let mut surface_cells = Vec::new();
        for (e, &cell) in active_cells.iter().enumerate() {
            let nodes = sdf.cell_corner_nodes(cell);
            cell_dofs.push(nodes.map(|n| node_map[n].expect("corner of active cell has a DOF")));
            let phi = sdf.cell_corner_values(cell);
            volume_weights.push(cell_volume_weights(&phi, h).map(|w| w.max(floor)));
            if has_sign_change(&phi) {
                let quadrature = cell_boundary_weights(&phi, h)?;
                if quadrature.area > 0.0 {
                    let is_dirichlet = nodes.iter().any(|&n| dirichlet.contains(&sdf.node_position(n)));
                    surface_cells.push(SurfaceCell { cell: e, quadrature, dirichlet: is_dirichlet });
                }
            }
        }
        Ok(Self {
            sdf,
            active_cells,
            cell_lookup,
            node_map,
            dof_nodes,
            cell_dofs,
            volume_weights,
            surface_cells,
            rest_positions,
        })
    }

    pub fn sdf(&self) -> &SignedDistanceGrid {
        &self.sdf
    }

    pub fn spacing(&self) -> f64 {
        self.sdf.spacing()
    }

    pub fn active_cells(&self) -> &[[usize; 3]] {
        &self.active_cells
    }

    pub fn num_cells(&self) -> usize {
        self.active_cells.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_nodes.len()
    }

    /// Active index of a lattice cell.
    pub fn active_index(&self, cell: [usize; 3]) -> Option<usize> {
        self.cell_lookup[self.sdf.cell_index(cell)]
    }

    pub fn node_dof(&self, node: usize) -> Option<usize> {
        self.node_map[node]
    }

    pub fn dof_node(&self, dof: usize) -> usize {
        self.dof_nodes[dof]
    }

    pub fn cell_dofs(&self, e: usize) -> &[usize; 8] {
        &self.cell_dofs[e]
    }

    pub fn volume_weights(&self, e: usize) -> &[f64; 8] {
        &self.volume_weights[e]
    }

    pub fn surface_cells(&self) -> &[SurfaceCell] {
        &self.surface_cells
    }

    pub fn dirichlet_cells(&self) -> impl Iterator<Item = &SurfaceCell> {
        self.surface_cells.iter().filter(|s| s.dirichlet)
    }

    /// Rest position `x′` of every DOF.
    pub fn rest_positions(&self) -> &[Vec3] {
        &self.rest_positions
    }

    /// Rest positions of the corners of active cell `e`.
    pub fn cell_rest_corners(&self, e: usize) -> [Vec3; 8] {
        self.cell_dofs[e].map(|d| self.rest_positions[d])
    }

    /// Per-DOF integral `Σ_e w_v(e, i)`.
    pub fn nodal_volumes(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_dofs()];
        for (e, w) in self.volume_weights.iter().enumerate() {
            for (c, &d) in self.cell_dofs[e].iter().enumerate() {
                out[d] += w[c];
            }
        }
        out
    }

    /// `∫_Ω 1 dx` approximated by the volume weights.
    pub fn volume(&self) -> f64 {
        self.volume_weights.iter().flatten().sum()
    }

    /// Volume-weighted centroid of the rest shape.
    pub fn centroid(&self) -> Vec3 {
        let vol = self.nodal_volumes();
        let total: f64 = vol.iter().sum();
        self.rest_positions.iter().zip(&vol).map(|(x, w)| x * *w).sum::<Vec3>() / total
    }

    /// Rest-space position of the collision point of a surface cell.
    pub fn surface_point(&self, s: &SurfaceCell) -> Vec3 {
        let corners = self.cell_rest_corners(s.cell);
        let n = trilinear_weights(&s.quadrature.centroid);
        (0..8).map(|c| corners[c] * n[c]).sum()
    }
}
