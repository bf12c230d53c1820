use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimulationGrid;
use crate::math::Vec3;

/// Narrow-band extension settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtensionOptions {
    /// Band width in voxels.
    pub phi_max: f64,
    /// Stop when the largest Gauss–Seidel correction drops below `tolerance · max|u|`.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        Self { phi_max: 5.0, tolerance: 1e-8, max_sweeps: 500 }
    }
}

impl ExtensionOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi_max > 0.0) || !(self.tolerance > 0.0) || self.max_sweeps == 0 {
            return Err(Error::Config(format!(
                "extension needs φ_max > 0, tolerance > 0 and at least one sweep, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

/// Harmonic continuation of the FEM displacement into the band around the rest shape.
#[derive(Clone, Debug)]
pub struct ExtendedDisplacementField {
    /// Band width in world units.
    pub phi_max: f64,
    /// Displacement per lattice node; zero where undefined.
    pub values: Vec<Vec3>,
    /// Nodes carrying a value (DOF nodes and reachable band nodes).
    pub defined: Vec<bool>,
    /// Free nodes of the Laplace problem, increasing lattice index.
    pub band_nodes: Vec<usize>,
    /// Inactive lattice cells with all corners defined and min corner `φ₀ ≤ φ_max`.
    pub band_cells: Vec<usize>,
    pub sweeps: usize,
    pub residual: f64,
}

/// Band topology shared by every frame of a grid.
#[derive(Clone, Debug)]
pub struct ExtensionBand {
    pub phi_max: f64,
    pub defined: Vec<bool>,
    pub band_nodes: Vec<usize>,
    pub band_cells: Vec<usize>,
    /// Defined lattice neighbours per band node.
    neighbours: Vec<Vec<usize>>,
    /// Breadth-first order from the DOF nodes, for the initial guess.
    bfs_order: Vec<usize>,
}

fn lattice_neighbours(dims: [usize; 3], n: usize) -> impl Iterator<Item = usize> {
    let i = n % dims[0];
    let j = (n / dims[0]) % dims[1];
    let k = n / (dims[0] * dims[1]);
    let sx = 1;
    let sy = dims[0];
    let sz = dims[0] * dims[1];
    [
        (i > 0).then(|| n - sx),
        (i + 1 < dims[0]).then(|| n + sx),
        (j > 0).then(|| n - sy),
        (j + 1 < dims[1]).then(|| n + sy),
        (k > 0).then(|| n - sz),
        (k + 1 < dims[2]).then(|| n + sz),
    ]
    .into_iter()
    .flatten()
}

impl ExtensionBand {
    /// `phi_max` in voxels.
    pub fn new(grid: &SimulationGrid, phi_max: f64) -> Self {
        let sdf = grid.sdf();
        let h = grid.spacing();
        let dims = sdf.dims();
        let phi_max_world = phi_max * h;
        let n_nodes = sdf.node_count();
        let cd = sdf.cell_dims();
        let mut candidate = vec![false; n_nodes];
        let mut cells = Vec::new();
        for c in 0..cd[0] * cd[1] * cd[2] {
            let coords = sdf.cell_coords(c);
            if grid.active_index(coords).is_some() {
                continue;
            }
            let phi = sdf.cell_corner_values(coords);
            if phi.iter().cloned().fold(f64::INFINITY, f64::min) <= phi_max_world {
                cells.push(c);
                for n in sdf.cell_corner_nodes(coords) {
                    if grid.node_dof(n).is_none() {
                        candidate[n] = true;
                    }
                }
            }
        }
        // multi-source BFS from DOF nodes through candidate band nodes
        let mut defined = vec![false; n_nodes];
        let mut queue = VecDeque::new();
        for d in 0..grid.num_dofs() {
            let n = grid.dof_node(d);
            defined[n] = true;
        }
        let mut seeds: Vec<usize> = (0..grid.num_dofs()).map(|d| grid.dof_node(d)).collect();
        seeds.sort_unstable();
        queue.extend(seeds);
        let mut bfs_order = Vec::new();
        while let Some(n) = queue.pop_front() {
            for m in lattice_neighbours(dims, n) {
                if candidate[m] && !defined[m] {
                    defined[m] = true;
                    bfs_order.push(m);
                    queue.push_back(m);
                }
            }
        }
        let mut band_nodes = bfs_order.clone();
        band_nodes.sort_unstable();
        let band_cells: Vec<usize> = cells
            .into_iter()
            .filter(|&c| sdf.cell_corner_nodes(sdf.cell_coords(c)).iter().all(|&n| defined[n]))
            .collect();
        let neighbours =
            band_nodes.iter().map(|&n| lattice_neighbours(dims, n).filter(|&m| defined[m]).collect()).collect();
        Self { phi_max: phi_max_world, defined, band_nodes, band_cells, neighbours, bfs_order }
    }

    /// Lattice field holding `u` on DOF nodes and zero elsewhere.
    fn scatter(&self, grid: &SimulationGrid, u: &[Vec3]) -> Vec<Vec3> {
        let mut values = vec![Vec3::zeros(); self.defined.len()];
        for (d, ud) in u.iter().enumerate() {
            values[grid.dof_node(d)] = *ud;
        }
        values
    }

    /// Gauss–Seidel on `L_bb x = rhs + (neighbour values)` in place over `values`.
    /// Returns `(sweeps, residual)` where residual is the last largest correction.
    fn gauss_seidel(&self, values: &mut [Vec3], rhs: Option<&[Vec3]>, tol: f64, max_sweeps: usize) -> (usize, f64) {
        if self.band_nodes.is_empty() {
            return (0, 0.0);
        }
        let mut residual = 0.0;
        for sweep in 1..=max_sweeps {
            residual = 0.0f64;
            for (b, &n) in self.band_nodes.iter().enumerate() {
                let nb = &self.neighbours[b];
                let mut s = rhs.map_or(Vec3::zeros(), |r| r[b]);
                for &m in nb {
                    s += values[m];
                }
                let new = s / nb.len() as f64;
                residual = residual.max((new - values[n]).amax());
                values[n] = new;
            }
            if residual <= tol {
                return (sweep, residual);
            }
        }
        (max_sweeps, residual)
    }

    pub fn extend(&self, grid: &SimulationGrid, u: &[Vec3], opts: &ExtensionOptions) -> Result<ExtendedDisplacementField> {
        if u.len() != grid.num_dofs() {
            return Err(Error::Dimension { expected: grid.num_dofs(), got: u.len() });
        }
        let mut values = self.scatter(grid, u);
        // initial guess: mean of already assigned neighbours in BFS order
        let dims = grid.sdf().dims();
        let mut assigned: Vec<bool> = self.defined.iter().map(|_| false).collect();
        for d in 0..grid.num_dofs() {
            assigned[grid.dof_node(d)] = true;
        }
        for &n in &self.bfs_order {
            let (mut s, mut c) = (Vec3::zeros(), 0usize);
            for m in lattice_neighbours(dims, n) {
                if assigned[m] {
                    s += values[m];
                    c += 1;
                }
            }
            values[n] = s / c as f64;
            assigned[n] = true;
        }
        let scale = u.iter().map(|v| v.amax()).fold(0.0, f64::max);
        let (sweeps, residual) = self.gauss_seidel(&mut values, None, opts.tolerance * scale, opts.max_sweeps);
        if residual > opts.tolerance * scale {
            log::warn!("displacement extension stopped after {sweeps} sweeps with correction {residual:.3e}");
        }
        Ok(ExtendedDisplacementField {
            phi_max: self.phi_max,
            values,
            defined: self.defined.clone(),
            band_nodes: self.band_nodes.clone(),
            band_cells: self.band_cells.clone(),
            sweeps,
            residual,
        })
    }

    /// Transpose of the extension: lattice-node adjoints to DOF adjoints.
    /// Band adjoints are pulled back through `L_bb⁻¹` onto neighbouring DOF nodes.
    pub fn pull_back(&self, grid: &SimulationGrid, node_adjoint: &[Vec3], opts: &ExtensionOptions) -> Result<Vec<Vec3>> {
        let mut out: Vec<Vec3> = (0..grid.num_dofs()).map(|d| node_adjoint[grid.dof_node(d)]).collect();
        if self.band_nodes.is_empty() {
            return Ok(out);
        }
        let rhs: Vec<Vec3> = self.band_nodes.iter().map(|&n| node_adjoint[n]).collect();
        let scale = rhs.iter().map(|v| v.amax()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Ok(out);
        }
        // solve L_bb λ = rhs with the forward sweep on a field that is zero on DOF nodes
        let mut lambda = vec![Vec3::zeros(); self.defined.len()];
        let (sweeps, residual) = self.gauss_seidel(&mut lambda, Some(&rhs), opts.tolerance * scale, opts.max_sweeps);
        if residual > opts.tolerance * scale {
            return Err(Error::NonConvergence { iterations: sweeps, residual });
        }
        for (b, &n) in self.band_nodes.iter().enumerate() {
            for &m in &self.neighbours[b] {
                if let Some(d) = grid.node_dof(m) {
                    out[d] += lambda[n];
                }
            }
        }
        Ok(out)
    }
}

/// One-shot extension for a single displacement vector.
pub fn extend_displacements(grid: &SimulationGrid, u: &[Vec3], opts: &ExtensionOptions) -> Result<ExtendedDisplacementField> {
    opts.validate()?;
    ExtensionBand::new(grid, opts.phi_max).extend(grid, u, opts)
}
