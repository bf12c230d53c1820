//! First-order optimizers over a [`ParameterSet`] and the perturbed-start batch runner.

pub mod gd;
pub mod lbfgs;
pub mod rprop;
pub mod space;

pub use gd::{step_gd_bb, GdConfig, GdState};
pub use lbfgs::{step_lbfgs, LbfgsConfig, LbfgsState, LbfgsStep};
pub use rprop::{step_rprop, RpropConfig, RpropState};
pub use space::{wrap_angle, ParamSpace};

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{Objective, Param, ParamGradient, ParameterSet};
use crate::error::{Error, Result};

/// A scalar objective with gradient over parameter sets.
pub trait CostFunction: Sync {
    fn cost(&self, p: &ParameterSet) -> Result<f64>;
    fn cost_and_gradient(&self, p: &ParameterSet) -> Result<(f64, ParamGradient)>;
}

impl CostFunction for Objective {
    fn cost(&self, p: &ParameterSet) -> Result<f64> {
        Objective::cost(self, p)
    }

    fn cost_and_gradient(&self, p: &ParameterSet) -> Result<(f64, ParamGradient)> {
        self.gradient(p).map(|r| (r.cost, r.gradient))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    GdBb,
    #[default]
    Rprop,
    Lbfgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    /// Parameters being optimized; all others stay at their initial values.
    pub parameters: Vec<Param>,
    /// Physical bounds overriding [`Param::default_bounds`].
    pub bounds: BTreeMap<Param, (f64, f64)>,
    /// Optimize Young's modulus and mass density through their logarithm.
    pub log_space: bool,
    /// Stop when the largest internal gradient entry is at most this.
    pub gradient_tolerance: f64,
    pub rprop: RpropConfig,
    pub gd: GdConfig,
    pub lbfgs: LbfgsConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Rprop,
            iterations: 30,
            parameters: vec![Param::YoungsModulus],
            bounds: BTreeMap::new(),
            log_space: true,
            gradient_tolerance: 0.0,
            rprop: RpropConfig::default(),
            gd: GdConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("optimizer needs at least one iteration".into()));
        }
        if !(self.gradient_tolerance >= 0.0) {
            return Err(Error::Config("gradient tolerance must be non-negative".into()));
        }
        if !(self.gd.initial_step > 0.0) {
            return Err(Error::Config("GD initial step must be positive".into()));
        }
        self.rprop.validate()?;
        self.lbfgs.validate()?;
        self.space().map(|_| ())
    }

    pub fn space(&self) -> Result<ParamSpace> {
        ParamSpace::new(&self.parameters, self.log_space, &self.bounds)
    }
}

/// One optimizer iteration, evaluated before the update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    /// Physical values of the enabled parameters.
    pub params: Vec<f64>,
    /// `dJ/dp` of the enabled parameters.
    pub gradient: Vec<f64>,
    /// Euclidean norm of the gradient in internal coordinates.
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub id: usize,
    pub initial: ParameterSet,
    pub trace: Vec<IterationRecord>,
    pub final_params: ParameterSet,
    pub final_cost: f64,
    pub converged: bool,
    /// Parameters that were optimized through their logarithm.
    pub log_space: Vec<Param>,
    pub line_search_failures: usize,
}

fn check_finite(cost: f64, g: &[f64]) -> Result<()> {
    if !cost.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite cost or gradient (cost {cost})")));
    }
    Ok(())
}

/// Runs the configured optimizer from `initial`.
pub fn optimize(f: &dyn CostFunction, initial: &ParameterSet, config: &OptimizerConfig, id: usize) -> Result<RunResult> {
    config.validate()?;
    let space = config.space()?;
    let mut x = space.to_internal(initial);
    space.project(&mut x);
    let project = |v: &mut [f64]| space.project(v);
    let mut rprop = RpropState::new(&x, &space.log, &config.rprop);
    let mut gd = GdState::default();
    let mut lbfgs = LbfgsState::default();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut known_cost = None;
    for iteration in 0..config.iterations {
        let p = space.to_params(&x, initial);
        let (cost, grad) = f.cost_and_gradient(&p)?;
        let g = space.internal_gradient(&p, &grad);
        check_finite(cost, &g)?;
        trace.push(IterationRecord {
            iteration,
            cost,
            params: space.params.iter().map(|&q| p.get(q)).collect(),
            gradient: space.params.iter().map(|&q| grad.get(q)).collect(),
            gradient_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
        });
        known_cost = None;
        if g.iter().all(|v| v.abs() <= config.gradient_tolerance) {
            converged = true;
            known_cost = Some(cost);
            break;
        }
        match config.algorithm {
            Algorithm::Rprop => {
                step_rprop(&mut x, &g, &mut rprop, &config.rprop);
                project(&mut x);
                if rprop.exhausted() {
                    converged = true;
                    break;
                }
            }
            Algorithm::GdBb => {
                step_gd_bb(&mut x, &g, &mut gd, &config.gd);
                project(&mut x);
            }
            Algorithm::Lbfgs => {
                let mut c = |y: &[f64]| f.cost(&space.to_params(y, initial));
                match step_lbfgs(&x, cost, &g, &mut lbfgs, &config.lbfgs, &mut c, &project)? {
                    Some(s) => {
                        x = s.x;
                        known_cost = Some(s.cost);
                    }
                    None => {
                        converged = true;
                        known_cost = Some(cost);
                        break;
                    }
                }
            }
        }
    }
    let final_params = space.to_params(&x, initial);
    let final_cost = match known_cost {
        Some(c) => c,
        None => f.cost(&final_params)?,
    };
    Ok(RunResult {
        id,
        initial: initial.clone(),
        trace,
        final_params,
        final_cost,
        converged,
        log_space: space.params.iter().zip(&space.log).filter(|(_, &l)| l).map(|(&q, _)| q).collect(),
        line_search_failures: lbfgs.line_search_failures,
    })
}

/// Distribution of a parameter's initial value across batch runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    /// `p₀ · exp(U(ln min, ln max))`.
    LogUniformFactor { min: f64, max: f64 },
    /// `exp(U(ln low, ln high))`.
    LogUniform { low: f64, high: f64 },
    /// `U(low, high)`.
    Uniform { low: f64, high: f64 },
    /// `p₀ + U(−half_width, half_width)`.
    UniformOffset { half_width: f64 },
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Perturbation::LogUniformFactor { min, max } => 0.0 < min && min <= max,
            Perturbation::LogUniform { low, high } => 0.0 < low && low <= high,
            Perturbation::Uniform { low, high } => low <= high,
            Perturbation::UniformOffset { half_width } => half_width >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid perturbation {self:?}")))
        }
    }

    pub fn sample(&self, base: f64, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        let lerp = |a: f64, b: f64| a + (b - a) * u;
        match *self {
            Perturbation::LogUniformFactor { min, max } => base * lerp(min.ln(), max.ln()).exp(),
            Perturbation::LogUniform { low, high } => lerp(low.ln(), high.ln()).exp(),
            Perturbation::Uniform { low, high } => lerp(low, high),
            Perturbation::UniformOffset { half_width } => base + lerp(-half_width, half_width),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub runs: usize,
    pub seed: u64,
    pub perturbations: BTreeMap<Param, Perturbation>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { runs: 1, seed: 0, perturbations: BTreeMap::new() }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("a batch needs at least one run".into()));
        }
        self.perturbations.values().try_for_each(|p| p.validate())
    }

    /// Initial parameters of run `id`; independent of how many runs there are.
    pub fn sample_initial(&self, base: &ParameterSet, id: usize) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id as u64);
        let mut p = base.clone();
        for (&q, pert) in &self.perturbations {
            p.set(q, pert.sample(base.get(q), &mut rng));
        }
        p
    }
}

#[derive(Clone, Debug)]
pub struct BatchRun {
    pub id: usize,
    pub initial: ParameterSet,
    pub outcome: std::result::Result<RunResult, String>,
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub runs: Vec<BatchRun>,
    /// Run with the lowest final cost, lowest id on ties.
    pub best: usize,
}

impl BatchResult {
    pub fn best_run(&self) -> &RunResult {
        self.runs[self.best].outcome.as_ref().expect("best run succeeded")
    }

    pub fn successful(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter_map(|r| r.outcome.as_ref().ok())
    }
}

/// Optimizes `batch.runs` perturbed starts concurrently.
pub fn run_batch(
    f: &dyn CostFunction,
    base: &ParameterSet,
    config: &OptimizerConfig,
    batch: &BatchConfig,
) -> Result<BatchResult> {
    config.validate()?;
    batch.validate()?;
    let runs: Vec<BatchRun> = (0..batch.runs)
        .into_par_iter()
        .map(|id| {
            let initial = batch.sample_initial(base, id);
            let outcome = optimize(f, &initial, config, id).map_err(|e| {
                log::warn!("run {id} failed: {e}");
                e.to_string()
            });
            BatchRun { id, initial, outcome }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for r in &runs {
        if let Ok(res) = &r.outcome {
            if res.final_cost.is_finite() && best.map_or(true, |(_, c)| res.final_cost < c) {
                best = Some((r.id, res.final_cost));
            }
        }
    }
    let (best, _) = best.ok_or(Error::AllRunsFailed)?;
    Ok(BatchResult { runs, best })
}

/// CSV `iteration,cost,<param>…,grad_<param>…` of one run.
pub fn write_run_csv(run: &RunResult, params: &[Param], mut w: impl Write) -> Result<()> {
    write!(w, "iteration,cost")?;
    for q in params {
        write!(w, ",{q}")?;
    }
    for q in params {
        write!(w, ",grad_{q}")?;
    }
    writeln!(w)?;
    for rec in &run.trace {
        write!(w, "{},{:e}", rec.iteration, rec.cost)?;
        for v in rec.params.iter().chain(&rec.gradient) {
            write!(w, ",{v:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: usize,
    pub initial: BTreeMap<Param, f64>,
    pub final_params: Option<BTreeMap<Param, f64>>,
    pub initial_cost: Option<f64>,
    pub final_cost: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub algorithm: Algorithm,
    pub best_run: usize,
    pub best_cost: f64,
    pub best_params: BTreeMap<Param, f64>,
    pub log_space: Vec<Param>,
    pub runs: Vec<RunSummary>,
}

impl BatchSummary {
    pub fn new(result: &BatchResult, config: &OptimizerConfig) -> Self {
        let pick = |p: &ParameterSet| config.parameters.iter().map(|&q| (q, p.get(q))).collect::<BTreeMap<_, _>>();
        let best = result.best_run();
        Self {
            algorithm: config.algorithm,
            best_run: result.best,
            best_cost: best.final_cost,
            best_params: pick(&best.final_params),
            log_space: best.log_space.clone(),
            runs: result
                .runs
                .iter()
                .map(|r| match &r.outcome {
                    Ok(res) => RunSummary {
                        id: r.id,
                        initial: pick(&r.initial),
                        final_params: Some(pick(&res.final_params)),
                        initial_cost: res.trace.first().map(|t| t.cost),
                        final_cost: Some(res.final_cost),
                        iterations: res.trace.len(),
                        converged: res.converged,
                        error: None,
                    },
                    Err(e) => RunSummary {
                        id: r.id,
                        initial: pick(&r.initial),
                        final_params: None,
                        initial_cost: None,
                        final_cost: None,
                        iterations: 0,
                        converged: false,
                        error: Some(e.clone()),
                    },
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    /// `J = Σ wᵢ (pᵢ − cᵢ)²` over a few coordinates, with an exact gradient.
    struct Bowl {
        target: ParameterSet,
        weights: Vec<(Param, f64)>,
    }

    impl CostFunction for Bowl {
        fn cost(&self, p: &ParameterSet) -> Result<f64> {
            p.validate()?;
            Ok(self.weights.iter().map(|&(q, w)| w * (p.get(q) - self.target.get(q)).powi(2)).sum())
        }

        fn cost_and_gradient(&self, p: &ParameterSet) -> Result<(f64, ParamGradient)> {
            let mut g = ParamGradient::default();
            for &(q, w) in &self.weights {
                g.add(q, 2.0 * w * (p.get(q) - self.target.get(q)));
            }
            Ok((self.cost(p)?, g))
        }
    }

    fn bowl() -> Bowl {
        Bowl {
            target: ParameterSet { youngs_modulus: 5000.0, gravity: Vec3::new(0.0, 0.0, -9.81), ..Default::default() },
            weights: vec![(Param::YoungsModulus, 1e-6), (Param::GravityZ, 1.0)],
        }
    }

    fn config(algorithm: Algorithm) -> OptimizerConfig {
        OptimizerConfig {
            algorithm,
            iterations: 200,
            parameters: vec![Param::YoungsModulus, Param::GravityZ],
            ..Default::default()
        }
    }

    #[test]
    fn every_algorithm_finds_the_bowl_minimum() {
        let f = bowl();
        let start = ParameterSet { youngs_modulus: 800.0, gravity: Vec3::new(0.0, 0.0, -3.0), ..Default::default() };
        for alg in [Algorithm::Rprop, Algorithm::GdBb, Algorithm::Lbfgs] {
            let mut c = config(alg);
            c.gd.initial_step = 1e-3;
            let r = optimize(&f, &start, &c, 0).unwrap();
            let k = r.final_params.youngs_modulus;
            assert!((k - 5000.0).abs() < 5.0, "{alg:?}: k = {k}");
            assert!((r.final_params.gravity.z + 9.81).abs() < 1e-2, "{alg:?}: g = {}", r.final_params.gravity.z);
            assert!(r.final_cost <= r.trace[0].cost);
            assert_eq!(r.log_space, vec![Param::YoungsModulus]);
        }
    }

    #[test]
    fn iterates_respect_bounds() {
        let f = bowl();
        let start = ParameterSet { youngs_modulus: 800.0, gravity: Vec3::new(0.0, 0.0, -3.0), ..Default::default() };
        for alg in [Algorithm::Rprop, Algorithm::GdBb, Algorithm::Lbfgs] {
            let mut c = config(alg);
            c.iterations = 40;
            c.bounds.insert(Param::YoungsModulus, (100.0, 2000.0));
            c.bounds.insert(Param::GravityZ, (-5.0, 5.0));
            let r = optimize(&f, &start, &c, 0).unwrap();
            for rec in &r.trace {
                assert!((100.0..=2000.0).contains(&rec.params[0]) && (-5.0..=5.0).contains(&rec.params[1]));
            }
            assert!((r.final_params.youngs_modulus - 2000.0).abs() < 1e-6 * 2000.0, "{alg:?}");
            assert!((r.final_params.gravity.z + 5.0).abs() < 1e-9, "{alg:?}");
        }
    }

    #[test]
    fn rprop_trace_is_invariant_to_cost_scaling() {
        struct Scaled<'a>(&'a Bowl, f64);
        impl CostFunction for Scaled<'_> {
            fn cost(&self, p: &ParameterSet) -> Result<f64> {
                Ok(self.1 * self.0.cost(p)?)
            }
            fn cost_and_gradient(&self, p: &ParameterSet) -> Result<(f64, ParamGradient)> {
                let (c, mut g) = self.0.cost_and_gradient(p)?;
                g.0.iter_mut().for_each(|v| *v *= self.1);
                Ok((self.1 * c, g))
            }
        }
        let f = bowl();
        let start = ParameterSet { youngs_modulus: 800.0, gravity: Vec3::new(0.0, 0.0, -3.0), ..Default::default() };
        let c = config(Algorithm::Rprop);
        let a = optimize(&Scaled(&f, 1.0), &start, &c, 0).unwrap();
        let b = optimize(&Scaled(&f, 123.0), &start, &c, 0).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!(x.params, y.params);
        }
    }

    #[test]
    fn batch_is_deterministic_and_picks_the_lowest_cost() {
        let f = bowl();
        let base = ParameterSet { youngs_modulus: 5000.0, gravity: Vec3::new(0.0, 0.0, -3.0), ..Default::default() };
        let mut c = config(Algorithm::Rprop);
        c.iterations = 15;
        let batch = BatchConfig {
            runs: 6,
            seed: 42,
            perturbations: BTreeMap::from([
                (Param::YoungsModulus, Perturbation::LogUniformFactor { min: 0.1, max: 10.0 }),
                (Param::GravityZ, Perturbation::UniformOffset { half_width: 2.0 }),
            ]),
        };
        let a = run_batch(&f, &base, &c, &batch).unwrap();
        let b = run_batch(&f, &base, &c, &batch).unwrap();
        let costs: Vec<f64> = a.successful().map(|r| r.final_cost).collect();
        assert_eq!(costs, b.successful().map(|r| r.final_cost).collect::<Vec<_>>());
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_run().final_cost, min);
        assert_eq!(a.best, costs.iter().position(|&c| c == min).unwrap());
        for r in &a.runs {
            let k = r.initial.youngs_modulus;
            assert!((500.0..=50000.0).contains(&k));
        }
        let s = BatchSummary::new(&a, &c);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<BatchSummary>(&json).unwrap(), s);
    }

    #[test]
    fn single_unperturbed_run_matches_optimize() {
        let f = bowl();
        let base = ParameterSet { youngs_modulus: 700.0, ..Default::default() };
        let c = config(Algorithm::Lbfgs);
        let a = run_batch(&f, &base, &c, &BatchConfig::default()).unwrap();
        let b = optimize(&f, &base, &c, 0).unwrap();
        assert_eq!(a.best_run(), &b);
    }

    #[test]
    fn ties_go_to_the_lowest_id_and_failures_are_recorded() {
        let f = bowl();
        // Poisson ratios above 0.5 make the cost fail for some runs
        let base = ParameterSet { youngs_modulus: 5000.0, gravity: Vec3::new(0.0, 0.0, -9.81), ..Default::default() };
        let c = OptimizerConfig { iterations: 3, parameters: vec![Param::GravityX], ..Default::default() };
        let batch = BatchConfig {
            runs: 8,
            seed: 1,
            perturbations: BTreeMap::from([(Param::PoissonRatio, Perturbation::Uniform { low: 0.3, high: 0.7 })]),
        };
        let r = run_batch(&f, &base, &c, &batch).unwrap();
        let failed = r.runs.iter().filter(|x| x.outcome.is_err()).count();
        assert!(failed > 0 && failed < 8);
        let first_ok = r.runs.iter().position(|x| x.outcome.is_ok()).unwrap();
        assert_eq!(r.best, first_ok);
        let all_bad = BatchConfig {
            perturbations: BTreeMap::from([(Param::PoissonRatio, Perturbation::Uniform { low: 0.6, high: 0.7 })]),
            ..batch
        };
        assert!(matches!(run_batch(&f, &base, &c, &all_bad), Err(Error::AllRunsFailed)));
    }

    #[test]
    fn run_csv_layout() {
        let f = bowl();
        let c = OptimizerConfig { iterations: 2, parameters: vec![Param::GravityZ], ..Default::default() };
        let r = optimize(&f, &ParameterSet::default(), &c, 3).unwrap();
        let mut buf = Vec::new();
        write_run_csv(&r, &c.parameters, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,cost,gravity_z,grad_gravity_z");
        assert_eq!(lines.len(), 1 + r.trace.len());
        let row: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        let expected_cost = 9.81f64.powi(2) + 1e-6 * 4000.0f64.powi(2);
        assert_eq!(row.len(), 4);
        assert!((row[1] - expected_cost).abs() < 1e-12 * expected_cost);
        assert_eq!(row[2], 0.0);
        assert!((row[3] - 2.0 * 9.81).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(OptimizerConfig { parameters: vec![], ..Default::default() }.validate().is_err());
        let json = r#"{"algorithm":"lbfgs","iterations":5,"parameters":["youngs_modulus","gravity_z"],"bounds":{"youngs_modulus":[10.0,1e5]}}"#;
        let c: OptimizerConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.algorithm, Algorithm::Lbfgs);
        assert_eq!(c.bounds[&Param::YoungsModulus], (10.0, 1e5));
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"iteratons":5}"#).is_err());
    }
}
