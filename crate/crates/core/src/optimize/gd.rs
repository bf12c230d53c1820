use serde::{Deserialize, Serialize};

/// Gradient descent with Barzilai–Borwein step sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdConfig {
    /// Step of the first iteration, in internal coordinates per unit gradient.
    pub initial_step: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self { initial_step: 1e-3 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GdState {
    pub step: Option<f64>,
    previous: Option<(Vec<f64>, Vec<f64>)>,
}

/// `x ← x − α g` with `α = ΔxᵀΔg / ΔgᵀΔg` after the first iteration. A vanishing or
/// non-positive BB quotient keeps the previous step.
pub fn step_gd_bb(x: &mut [f64], g: &[f64], state: &mut GdState, config: &GdConfig) {
    let mut alpha = state.step.unwrap_or(config.initial_step);
    if let Some((px, pg)) = &state.previous {
        let (mut sy, mut yy) = (0.0, 0.0);
        for i in 0..x.len() {
            let (s, y) = (x[i] - px[i], g[i] - pg[i]);
            sy += s * y;
            yy += y * y;
        }
        let bb = sy / yy;
        if yy > 0.0 && bb.is_finite() && bb > 0.0 {
            alpha = bb;
        }
    }
    state.previous = Some((x.to_vec(), g.to_vec()));
    state.step = Some(alpha);
    for (xi, gi) in x.iter_mut().zip(g) {
        *xi -= alpha * gi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimizer_in_two_steps() {
        // f = ½ a (x − c)²
        let (a, c) = (3.5, -1.25);
        let mut x = [4.0];
        let mut st = GdState::default();
        let cfg = GdConfig { initial_step: 0.01 };
        for _ in 0..2 {
            let g = [a * (x[0] - c)];
            step_gd_bb(&mut x, &g, &mut st, &cfg);
        }
        assert!((x[0] - c).abs() < 1e-12, "{}", x[0]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut x = [1.0, 2.0];
        let mut st = GdState::default();
        step_gd_bb(&mut x, &[0.0, 0.0], &mut st, &GdConfig::default());
        step_gd_bb(&mut x, &[0.0, 0.0], &mut st, &GdConfig::default());
        assert_eq!(x, [1.0, 2.0]);
        assert_eq!(st.step, Some(1e-3));
    }
}
