use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsConfig {
    pub memory: usize,
    /// Sufficient-decrease constant of the Armijo condition.
    pub c1: f64,
    /// Backtracking factor.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Length of the first steepest-descent trial step in internal coordinates.
    pub initial_step: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 6, c1: 1e-4, shrink: 0.5, max_backtracks: 20, initial_step: 0.1 }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || !(0.0 < self.c1 && self.c1 < 1.0) || !(0.0 < self.shrink && self.shrink < 1.0) {
            return Err(Error::Config(format!("invalid L-BFGS settings {self:?}")));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config("L-BFGS initial step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LbfgsState {
    /// Curvature pairs `(s, y)`, oldest first.
    pub pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
    /// Point and gradient of the previous accepted iterate.
    last: Option<(Vec<f64>, Vec<f64>)>,
    pub line_search_failures: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LbfgsState {
    /// Stores `(x − x_prev, g − g_prev)` when `sᵀy > 0`; returns whether it was kept.
    pub fn update(&mut self, x: &[f64], g: &[f64], memory: usize) -> bool {
        let mut kept = false;
        if let Some((px, pg)) = self.last.take() {
            let s: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(&pg).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > 0.0 {
                if self.pairs.len() == memory {
                    self.pairs.pop_front();
                }
                self.pairs.push_back((s, y));
                kept = true;
            }
        }
        self.last = Some((x.to_vec(), g.to_vec()));
        kept
    }

    /// Two-loop recursion `d = −H g`.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y) in self.pairs.iter().rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        if let Some((s, y)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), (a, rho)) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter().map(|v| -v).collect()
    }
}

/// Outcome of one L-BFGS iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsStep {
    pub x: Vec<f64>,
    pub cost: f64,
    /// The quasi-Newton direction failed and a steepest-descent step was taken.
    pub fallback: bool,
}

/// Two-loop direction and projected backtracking line search from `(x, f, g)`.
/// `project` maps trial points into the feasible set. Returns `None` when neither
/// the quasi-Newton nor the steepest-descent direction decreases the cost.
pub fn step_lbfgs(
    x: &[f64],
    f: f64,
    g: &[f64],
    state: &mut LbfgsState,
    config: &LbfgsConfig,
    cost: &mut dyn FnMut(&[f64]) -> Result<f64>,
    project: &dyn Fn(&mut [f64]),
) -> Result<Option<LbfgsStep>> {
    state.update(x, g, config.memory);
    let gnorm = dot(g, g).sqrt();
    if gnorm == 0.0 {
        return Ok(None);
    }
    let steepest: Vec<f64> = g.iter().map(|v| -v * config.initial_step / gnorm).collect();
    let mut d = if state.pairs.is_empty() { steepest.clone() } else { state.direction(g) };
    if !(dot(&d, g) < 0.0) {
        state.pairs.clear();
        d = steepest.clone();
    }
    let mut search = |d: &[f64]| -> Result<Option<(Vec<f64>, f64)>> {
        let mut t = 1.0;
        for _ in 0..=config.max_backtracks {
            let mut trial: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
            project(&mut trial);
            let decrease: f64 = g.iter().zip(&trial).zip(x).map(|((gi, a), b)| gi * (a - b)).sum();
            let ft = cost(&trial)?;
            if ft.is_finite() && decrease < 0.0 && ft <= f + config.c1 * decrease {
                return Ok(Some((trial, ft)));
            }
            t *= config.shrink;
        }
        Ok(None)
    };
    if let Some((x, c)) = search(&d)? {
        return Ok(Some(LbfgsStep { x, cost: c, fallback: false }));
    }
    state.line_search_failures += 1;
    state.pairs.clear();
    Ok(search(&steepest)?.map(|(x, c)| LbfgsStep { x, cost: c, fallback: true }))
}
