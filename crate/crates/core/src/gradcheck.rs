//! Adjoint gradients compared against finite differences, at a point and along a parameter sweep.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{finite_difference_gradient, FdScheme, Objective, Param, ParameterSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: Param,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Geometric instead of linear spacing.
    #[serde(default)]
    pub log_spacing: bool,
}

impl SweepConfig {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                if self.log_spacing {
                    (self.min.ln() + s * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + s * (self.max - self.min)
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub parameters: Vec<Param>,
    /// Central difference step relative to `max(|p|, 1e-3)`.
    pub central_relative_step: f64,
    /// Absolute step of the coarse one-sided estimator.
    pub forward_step: f64,
    /// Per-parameter overrides of `forward_step`.
    pub forward_steps: BTreeMap<Param, f64>,
    pub sweep: Option<SweepConfig>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            parameters: vec![Param::YoungsModulus],
            central_relative_step: 1e-4,
            forward_step: 5.0,
            forward_steps: BTreeMap::new(),
            sweep: None,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.central_relative_step > 0.0) || !(self.forward_step > 0.0) {
            return Err(Error::Config("finite-difference steps must be positive".into()));
        }
        if let Some((q, _)) = self.forward_steps.iter().find(|(_, d)| !(**d > 0.0)) {
            return Err(Error::Config(format!("forward step of {q} must be positive")));
        }
        if let Some(s) = &self.sweep {
            let ok = s.points >= 1 && s.min <= s.max && (!s.log_spacing || s.min > 0.0);
            if !ok {
                return Err(Error::Config(format!("invalid sweep {s:?}")));
            }
        }
        Ok(())
    }

    pub fn central_step(&self, p: &ParameterSet, q: Param) -> f64 {
        self.central_relative_step * p.get(q).abs().max(1e-3)
    }

    pub fn forward_step_for(&self, q: Param) -> f64 {
        self.forward_steps.get(&q).copied().unwrap_or(self.forward_step)
    }
}

fn sign(x: f64) -> i8 {
    (x > 0.0) as i8 - (x < 0.0) as i8
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub parameter: Param,
    pub value: f64,
    pub adjoint: f64,
    pub central: f64,
    pub forward: f64,
    pub central_error: f64,
    pub forward_error: f64,
    pub central_sign_agrees: bool,
    pub forward_sign_agrees: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub cost: f64,
    pub rows: Vec<GradcheckRow>,
}

impl GradcheckReport {
    pub fn max_central_error(&self) -> f64 {
        self.rows.iter().map(|r| r.central_error).fold(0.0, f64::max)
    }
}

/// Adjoint gradient of the enabled parameters next to central and coarse forward differences.
pub fn compare(objective: &Objective, p: &ParameterSet, config: &GradcheckConfig) -> Result<GradcheckReport> {
    config.validate()?;
    let report = objective.gradient(p)?;
    let f = |q: &ParameterSet| objective.cost(q);
    let central_steps: Vec<(Param, f64)> = config.parameters.iter().map(|&q| (q, config.central_step(p, q))).collect();
    let central = finite_difference_gradient(f, p, &central_steps, FdScheme::Central)?;
    let forward_steps: Vec<(Param, f64)> = config.parameters.iter().map(|&q| (q, config.forward_step_for(q))).collect();
    let forward = finite_difference_gradient(f, p, &forward_steps, FdScheme::Forward)?;
    let rows = config
        .parameters
        .iter()
        .map(|&q| {
            let (a, c, fw) = (report.gradient.get(q), central.get(q), forward.get(q));
            GradcheckRow {
                parameter: q,
                value: p.get(q),
                adjoint: a,
                central: c,
                forward: fw,
                central_error: relative_error(a, c),
                forward_error: relative_error(a, fw),
                central_sign_agrees: sign(a) == sign(c),
                forward_sign_agrees: sign(a) == sign(fw),
            }
        })
        .collect();
    Ok(GradcheckReport { cost: report.cost, rows })
}

pub fn write_gradcheck_csv(report: &GradcheckReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "parameter,value,adjoint,central_fd,forward_fd,central_rel_error,forward_rel_error,central_sign_agrees,forward_sign_agrees")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            r.parameter, r.value, r.adjoint, r.central, r.forward, r.central_error, r.forward_error, r.central_sign_agrees, r.forward_sign_agrees
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub cost: f64,
    pub adjoint: f64,
    pub forward: f64,
}

impl SweepRow {
    /// A gradient points towards `truth` when descending it moves the value there.
    fn correct(g: f64, value: f64, truth: f64) -> Option<bool> {
        (value != truth).then(|| sign(g) == sign(value - truth))
    }

    pub fn adjoint_correct(&self, truth: f64) -> Option<bool> {
        Self::correct(self.adjoint, self.value, truth)
    }

    pub fn forward_correct(&self, truth: f64) -> Option<bool> {
        Self::correct(self.forward, self.value, truth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: Param,
    pub truth: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Points whose gradient sign is wrong (or zero), for the adjoint and the forward estimator.
    pub fn sign_errors(&self) -> (usize, usize) {
        let count = |f: &dyn Fn(&SweepRow) -> Option<bool>| self.rows.iter().filter(|r| f(r) == Some(false)).count();
        (count(&|r| r.adjoint_correct(self.truth)), count(&|r| r.forward_correct(self.truth)))
    }

    /// Points that can be judged (value differs from the truth).
    pub fn judged(&self) -> usize {
        self.rows.iter().filter(|r| r.value != self.truth).count()
    }

    /// Sign changes of each estimator between consecutive nonzero sweep points.
    pub fn sign_flips(&self) -> (usize, usize) {
        let flips = |f: &dyn Fn(&SweepRow) -> f64| {
            let signs: Vec<i8> = self.rows.iter().map(|r| sign(f(r))).filter(|&s| s != 0).collect();
            signs.windows(2).filter(|w| w[0] != w[1]).count()
        };
        (flips(&|r| r.adjoint), flips(&|r| r.forward))
    }
}

/// Cost, adjoint gradient and coarse forward difference along `sweep`, all other parameters from `p`.
pub fn sweep(objective: &Objective, p: &ParameterSet, sweep: &SweepConfig, forward_step: f64, truth: f64) -> Result<SweepReport> {
    let q = sweep.parameter;
    let rows = sweep
        .values()
        .into_par_iter()
        .map(|v| {
            let at = p.with(q, v);
            let g = objective.gradient(&at)?;
            let plus = objective.cost(&at.with(q, v + forward_step))?;
            Ok(SweepRow { value: v, cost: g.cost, adjoint: g.gradient.get(q), forward: (plus - g.cost) / forward_step })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { parameter: q, truth, rows })
}

pub fn write_sweep_csv(report: &SweepReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "{},cost,adjoint,forward_fd,adjoint_sign_correct,forward_sign_correct", report.parameter)?;
    let fmt = |b: Option<bool>| b.map_or("", |b| if b { "true" } else { "false" });
    for r in &report.rows {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{},{}",
            r.value,
            r.cost,
            r.adjoint,
            r.forward,
            fmt(r.adjoint_correct(report.truth)),
            fmt(r.forward_correct(report.truth))
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values_and_validation() {
        let s = SweepConfig { parameter: Param::YoungsModulus, min: 1250.0, max: 20000.0, points: 5, log_spacing: true };
        let v = s.values();
        assert_eq!(v.len(), 5);
        assert!((v[0] - 1250.0).abs() < 1e-9 && (v[4] - 20000.0).abs() < 1e-9);
        assert!((v[2] - 5000.0).abs() < 1e-9);
        let lin = SweepConfig { log_spacing: false, ..s };
        assert!((lin.values()[1] - (1250.0 + 18750.0 / 4.0)).abs() < 1e-9);
        let mut c = GradcheckConfig { sweep: Some(SweepConfig { min: -1.0, ..s }), ..Default::default() };
        assert!(c.validate().is_err());
        c.sweep = None;
        c.forward_step = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sign_accounting() {
        let rows = vec![
            SweepRow { value: 1.0, cost: 0.0, adjoint: -2.0, forward: -1.0 },
            SweepRow { value: 2.0, cost: 0.0, adjoint: 0.0, forward: 3.0 },
            SweepRow { value: 3.0, cost: 0.0, adjoint: 1.0, forward: -1.0 },
            SweepRow { value: 4.0, cost: 0.0, adjoint: 1.0, forward: 1.0 },
        ];
        let r = SweepReport { parameter: Param::YoungsModulus, truth: 2.0, rows };
        assert_eq!(r.judged(), 3);
        assert_eq!(r.sign_errors(), (0, 1));
        assert_eq!(r.sign_flips(), (1, 3));
        let mut buf = Vec::new();
        write_sweep_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("youngs_modulus,cost"));
        assert!(text.lines().nth(2).unwrap().ends_with(",,"));
    }

    #[test]
    fn relative_error_is_symmetric() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 2.0), 0.5);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }
}
