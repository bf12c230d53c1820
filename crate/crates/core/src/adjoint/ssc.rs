use crate::cost::{trilinear_jacobian, DeformedCells, ExtensionBand, ExtensionOptions, FrameMatches};
use crate::error::Result;
use crate::grid::SimulationGrid;
use crate::math::{interpolate_scalar_gradient, trilinear_weights, Vec3};
use crate::observation::ObservationFrame;

/// DOF adjoint of one frame's cost and the number of matched points dropped
/// because their cell Jacobian was singular.
#[derive(Clone, Debug)]
pub struct FrameAdjoint {
    pub u_hat: Vec<Vec3>,
    pub dropped: usize,
}

/// Lattice-node adjoint of `Σ w ½ φ(ξ(x))²` where `x = Σ N_c(ξ)(X_c + u_c)` is held fixed:
/// `û_c = −N_c(ξ) A⁻ᵀ (w φ ∇_ξ φ)` with `A = ∂x/∂ξ`.
pub fn node_adjoint(frame: &ObservationFrame, matches: &FrameMatches, cells: &DeformedCells, n_nodes: usize, grid: &SimulationGrid) -> (Vec<Vec3>, usize) {
    let sdf = grid.sdf();
    let mut out = vec![Vec3::zeros(); n_nodes];
    let mut dropped = 0;
    for (m, w) in matches.matches.iter().zip(&frame.weights) {
        if !m.matched {
            continue;
        }
        let Some(slot) = cells.slot(m.cell) else { continue };
        let xi_hat = interpolate_scalar_gradient(&cells.phi[slot], &m.local) * (w * m.phi);
        let a = trilinear_jacobian(&cells.corners[slot], &m.local);
        let Some(lambda) = a.transpose().lu().solve(&xi_hat) else {
            log::warn!("singular cell Jacobian at observed point {:?}; dropping it from the gradient", m.x);
            dropped += 1;
            continue;
        };
        let nw = trilinear_weights(&m.local);
        let nodes = sdf.cell_corner_nodes(sdf.cell_coords(m.cell));
        for c in 0..8 {
            out[nodes[c]] -= lambda * nw[c];
        }
    }
    (out, dropped)
}

/// DOF adjoint of one frame, pulled back through the displacement extension.
pub fn adjoint_ssc(
    grid: &SimulationGrid,
    band: &ExtensionBand,
    frame: &ObservationFrame,
    matches: &FrameMatches,
    cells: &DeformedCells,
    opts: &ExtensionOptions,
) -> Result<FrameAdjoint> {
    let (nodes, dropped) = node_adjoint(frame, matches, cells, grid.sdf().node_count(), grid);
    Ok(FrameAdjoint { u_hat: band.pull_back(grid, &nodes, opts)?, dropped })
}
