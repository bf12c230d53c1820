use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adjoint::{Param, ParamGradient, ParameterSet};
use crate::error::{Error, Result};

/// Optimized subset of a [`ParameterSet`] in internal coordinates: `ln p` for
/// positive-scale parameters when log space is on, `p` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<Param>,
    pub log: Vec<bool>,
    /// Physical bounds per parameter.
    pub bounds: Vec<(f64, f64)>,
}

impl ParamSpace {
    pub fn new(params: &[Param], log_space: bool, overrides: &BTreeMap<Param, (f64, f64)>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::Config("at least one parameter must be enabled".into()));
        }
        let mut seen = params.to_vec();
        seen.sort();
        seen.dedup();
        if seen.len() != params.len() {
            return Err(Error::Config("enabled parameters must be distinct".into()));
        }
        let bounds: Vec<(f64, f64)> =
            params.iter().map(|q| overrides.get(q).copied().unwrap_or_else(|| q.default_bounds())).collect();
        for (q, (lo, hi)) in params.iter().zip(&bounds) {
            if !(lo <= hi) {
                return Err(Error::Config(format!("empty bounds [{lo}, {hi}] for {q}")));
            }
            if log_space && q.is_positive_scale() && !(*lo > 0.0) {
                return Err(Error::Config(format!("lower bound of {q} must be positive, got {lo}")));
            }
        }
        let log = params.iter().map(|q| log_space && q.is_positive_scale()).collect();
        Ok(Self { params: params.to_vec(), log, bounds })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Internal-coordinate bounds.
    pub fn internal_bounds(&self, i: usize) -> (f64, f64) {
        let (lo, hi) = self.bounds[i];
        if self.log[i] {
            (lo.ln(), hi.ln())
        } else {
            (lo, hi)
        }
    }

    pub fn to_internal(&self, p: &ParameterSet) -> Vec<f64> {
        self.params
            .iter()
            .zip(&self.log)
            .map(|(&q, &l)| if l { p.get(q).ln() } else { p.get(q) })
            .collect()
    }

    /// `base` with the enabled entries replaced by `x`.
    pub fn to_params(&self, x: &[f64], base: &ParameterSet) -> ParameterSet {
        let mut p = base.clone();
        for ((&q, &l), &v) in self.params.iter().zip(&self.log).zip(x) {
            p.set(q, if l { v.exp() } else { v });
        }
        p
    }

    /// `dJ/dx` from `dJ/dp`; `dJ/d ln p = p dJ/dp`.
    pub fn internal_gradient(&self, p: &ParameterSet, g: &ParamGradient) -> Vec<f64> {
        self.params
            .iter()
            .zip(&self.log)
            .map(|(&q, &l)| if l { g.get(q) * p.get(q) } else { g.get(q) })
            .collect()
    }

    /// Projects onto the bounds; the azimuth wraps into its period instead.
    pub fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let (lo, hi) = self.internal_bounds(i);
            if self.params[i] == Param::GroundPhi && (lo, hi) == Param::GroundPhi.default_bounds() {
                *v = wrap_angle(*v);
            }
            *v = v.clamp(lo, hi);
        }
    }

    pub fn contains(&self, p: &ParameterSet) -> bool {
        self.params.iter().zip(&self.bounds).all(|(&q, &(lo, hi))| (lo..=hi).contains(&p.get(q)))
    }
}

/// Maps an angle into `[−π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    (a + PI).rem_euclid(TAU) - PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_round_trip_and_gradient() {
        let s = ParamSpace::new(&[Param::YoungsModulus, Param::GravityZ], true, &BTreeMap::new()).unwrap();
        let p = ParameterSet { youngs_modulus: 5000.0, gravity: crate::math::Vec3::new(0.0, 0.0, -9.0), ..Default::default() };
        let x = s.to_internal(&p);
        assert!((x[0] - 5000f64.ln()).abs() < 1e-15);
        let q = s.to_params(&x, &ParameterSet::default());
        assert!((q.youngs_modulus - 5000.0).abs() < 1e-9);
        assert_eq!(q.gravity.z, -9.0);
        let mut g = ParamGradient::default();
        g.add(Param::YoungsModulus, 2.0);
        g.add(Param::GravityZ, 3.0);
        assert_eq!(s.internal_gradient(&p, &g), vec![10000.0, 3.0]);
    }

    #[test]
    fn projection_clamps_and_wraps() {
        let mut o = BTreeMap::new();
        o.insert(Param::GravityZ, (-20.0, 0.0));
        let s = ParamSpace::new(&[Param::GravityZ, Param::GroundPhi, Param::PoissonRatio], false, &o).unwrap();
        let mut x = vec![5.0, 4.0, 0.7];
        s.project(&mut x);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - (4.0 - std::f64::consts::TAU)).abs() < 1e-12);
        assert_eq!(x[2], 0.49);
    }

    #[test]
    fn invalid_spaces() {
        assert!(ParamSpace::new(&[], true, &BTreeMap::new()).is_err());
        assert!(ParamSpace::new(&[Param::GravityX, Param::GravityX], true, &BTreeMap::new()).is_err());
        let o = BTreeMap::from([(Param::YoungsModulus, (0.0, 10.0))]);
        assert!(ParamSpace::new(&[Param::YoungsModulus], true, &o).is_err());
        assert!(ParamSpace::new(&[Param::YoungsModulus], false, &o).is_ok());
    }
}
