//! Sparse surface constraint cost and the known-correspondence displacement cost.

pub mod extension;
pub mod matching;

pub use extension::{extend_displacements, ExtendedDisplacementField, ExtensionBand, ExtensionOptions};
pub use matching::{invert_trilinear, trilinear_jacobian, DeformedCells, PointMatch, TieBreak};

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::grid::SimulationGrid;
use crate::observation::{ObservationFrame, ObservationSequence};

/// Matches and cost of one observed frame.
#[derive(Clone, Debug)]
pub struct FrameMatches {
    pub t: usize,
    pub matches: Vec<PointMatch>,
    pub cost: f64,
}

/// Matches every point of `frame` against `cells` and sums `w ½ φ²`.
pub fn frame_cost(frame: &ObservationFrame, cells: &DeformedCells, tie: TieBreak) -> FrameMatches {
    let matches: Vec<PointMatch> = frame.points.par_iter().map(|x| cells.match_point(x, tie)).collect();
    let cost = matches.iter().zip(&frame.weights).map(|(m, w)| w * m.cost(cells.phi_max)).sum();
    FrameMatches { t: frame.t, matches, cost }
}

/// `J = Σ_t Σ_i w ½ φ⁽ᵗ⁾(x)²`, with `½ φ_max²` for unmatched points.
pub fn ssc_cost(
    observations: &ObservationSequence,
    fields: &BTreeMap<usize, ExtendedDisplacementField>,
    grid: &SimulationGrid,
    tie: TieBreak,
) -> Result<(f64, Vec<FrameMatches>)> {
    let mut frames = Vec::with_capacity(observations.frames.len());
    for frame in &observations.frames {
        let field = fields.get(&frame.t).ok_or(Error::MissingFrame(frame.t))?;
        frames.push(frame_cost(frame, &DeformedCells::new(grid, field), tie));
    }
    let total = frames.iter().map(|f| f.cost).sum();
    Ok((total, frames))
}

/// `Σ_t ½ w_t ‖u − u_obs‖² + ½ v_t ‖u̇ − u̇_obs‖²` over aligned step lists.
pub fn disp_cost(sim: &[SimState], obs: &[SimState], w: &[f64], v: &[f64]) -> Result<f64> {
    for len in [obs.len(), w.len(), v.len()] {
        if len != sim.len() {
            return Err(Error::Dimension { expected: sim.len(), got: len });
        }
    }
    let mut total = 0.0;
    for (t, (s, o)) in sim.iter().zip(obs).enumerate() {
        if s.u.len() != o.u.len() || s.v.len() != o.v.len() {
            return Err(Error::Dimension { expected: s.u.len(), got: o.u.len() });
        }
        let du: f64 = s.u.iter().zip(&o.u).map(|(a, b)| (a - b).norm_squared()).sum();
        let dv: f64 = s.v.iter().zip(&o.v).map(|(a, b)| (a - b).norm_squared()).sum();
        total += 0.5 * w[t] * du + 0.5 * v[t] * dv;
    }
    Ok(total)
}

/// CSV `frame,point,matched,cell,alpha,beta,gamma,phi`.
pub fn write_match_report(frames: &[FrameMatches], mut w: impl Write) -> Result<()> {
    writeln!(w, "frame,point,matched,cell,alpha,beta,gamma,phi")?;
    for f in frames {
        for (i, m) in f.matches.iter().enumerate() {
            if m.matched {
                writeln!(w, "{},{},1,{},{},{},{},{}", f.t, i, m.cell, m.local.x, m.local.y, m.local.z, m.phi)?;
            } else {
                writeln!(w, "{},{},0,,,,,{}", f.t, i, m.phi)?;
            }
        }
    }
    Ok(())
}
