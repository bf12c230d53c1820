use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rprop⁻ constants. Unset step sizes follow the starting point: `Δ₀ = 0.1|p₀|`
/// (at least 1e-4), `Δ_max = |p₀|`, `Δ_min = 1e-6|p₀|`; in log space `Δ₀ = 0.3`,
/// `Δ_max = 1`, `Δ_min = 1e-4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RpropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta0: Option<f64>,
    pub delta_max: Option<f64>,
    pub delta_min: Option<f64>,
}

impl Default for RpropConfig {
    fn default() -> Self {
        Self { eta_plus: 1.2, eta_minus: 0.5, delta0: None, delta_max: None, delta_min: None }
    }
}

impl RpropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.eta_minus && self.eta_minus < 1.0 && 1.0 < self.eta_plus) {
            return Err(Error::Config(format!(
                "Rprop needs 0 < η⁻ < 1 < η⁺, got η⁻ = {}, η⁺ = {}",
                self.eta_minus, self.eta_plus
            )));
        }
        for d in [self.delta0, self.delta_max, self.delta_min].into_iter().flatten() {
            if !(d > 0.0) {
                return Err(Error::Config(format!("Rprop step sizes must be positive, got {d}")));
            }
        }
        if let (Some(a), Some(b), Some(c)) = (self.delta_min, self.delta0, self.delta_max) {
            if !(a <= b && b <= c) {
                return Err(Error::Config("Rprop needs Δ_min ≤ Δ₀ ≤ Δ_max".into()));
            }
        }
        Ok(())
    }

    /// `(Δ₀, Δ_min, Δ_max)` for a coordinate starting at `x0`.
    pub fn steps_for(&self, x0: f64, log: bool) -> (f64, f64, f64) {
        let (d0, dmin, dmax) = if log {
            (0.3, 1e-4, 1.0)
        } else {
            let a = x0.abs();
            let d0 = (0.1 * a).max(1e-4);
            (d0, (1e-6 * a).max(1e-10), a.max(d0))
        };
        let dmin = self.delta_min.unwrap_or(dmin);
        let dmax = self.delta_max.unwrap_or(dmax).max(dmin);
        (self.delta0.unwrap_or(d0).clamp(dmin, dmax), dmin, dmax)
    }
}

/// Per-coordinate Rprop state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpropState {
    pub delta: Vec<f64>,
    pub delta_min: Vec<f64>,
    pub delta_max: Vec<f64>,
    pub previous: Vec<f64>,
}

impl RpropState {
    pub fn new(x0: &[f64], log: &[bool], config: &RpropConfig) -> Self {
        let s: Vec<(f64, f64, f64)> = x0.iter().zip(log).map(|(&x, &l)| config.steps_for(x, l)).collect();
        Self {
            delta: s.iter().map(|s| s.0).collect(),
            delta_min: s.iter().map(|s| s.1).collect(),
            delta_max: s.iter().map(|s| s.2).collect(),
            previous: vec![0.0; x0.len()],
        }
    }

    /// True when every step size has decayed to its floor.
    pub fn exhausted(&self) -> bool {
        self.delta.iter().zip(&self.delta_min).all(|(d, m)| d <= m)
    }
}

/// One Rprop⁻ update of `x` in place (before projection). Only gradient signs matter.
pub fn step_rprop(x: &mut [f64], g: &[f64], state: &mut RpropState, config: &RpropConfig) {
    for i in 0..x.len() {
        let s = g[i] * state.previous[i];
        if s > 0.0 {
            state.delta[i] = (state.delta[i] * config.eta_plus).min(state.delta_max[i]);
        } else if s < 0.0 {
            state.delta[i] = (state.delta[i] * config.eta_minus).max(state.delta_min[i]);
            state.previous[i] = 0.0;
            continue;
        }
        if g[i] != 0.0 {
            x[i] -= g[i].signum() * state.delta[i];
        }
        state.previous[i] = g[i];
    }
}
