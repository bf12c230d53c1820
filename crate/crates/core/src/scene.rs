//! Experiment configuration: geometry, parameters, cameras and optimizer settings in one JSON file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{Objective, ObjectiveOptions, Param, ParameterSet};
use crate::cost::ExtensionOptions;
use crate::dynamics::{ContactSettings, SimulationSettings, Simulator, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::gradcheck::GradcheckConfig;
use crate::grid::{DirichletRegion, Shape, SignedDistanceGrid, SimulationGrid};
use crate::math::Vec3;
use crate::observation::{
    extract_surface_samples, generate_observations, hemisphere_camera, CameraConfig, DepthCamera, ObservationSequence,
};
use crate::optimize::{Algorithm, BatchConfig, OptimizerConfig, Perturbation};
use crate::units::CalibrationInput;

pub const SCHEMA_VERSION: u32 = 1;

/// Source of the rest-shape signed distance field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Analytic {
        shape: Shape,
        spacing: f64,
        #[serde(default = "default_padding")]
        padding: usize,
    },
    /// Grid file, relative to the config file's directory.
    File { path: PathBuf },
}

fn default_padding() -> usize {
    2
}

/// Cameras placed at random on the upper hemisphere around the object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomCameras {
    pub count: usize,
    pub distance: f64,
    pub template: CameraConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSettings {
    pub cameras: Vec<CameraConfig>,
    pub random_cameras: Option<RandomCameras>,
    pub every_nth: usize,
    pub seed: u64,
}

impl Default for ObservationSettings {
    fn default() -> Self {
        Self { cameras: Vec::new(), random_cameras: None, every_nth: 1, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub geometry: Geometry,
    #[serde(default)]
    pub dirichlet: DirichletRegion,
    /// Ground-truth parameters used to synthesize observations.
    pub parameters: ParameterSet,
    /// Start of the optimization; defaults to `parameters`.
    #[serde(default)]
    pub initial: Option<ParameterSet>,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub observation: ObservationSettings,
    #[serde(default)]
    pub objective: ObjectiveOptions,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub batch: BatchConfig,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    #[serde(default)]
    pub calibration: Option<CalibrationInput>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl SceneConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: SceneConfig = serde_json::from_str(text)?;
        Ok(c)
    }

    /// Reads and validates a config; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c = Self::from_json(&std::fs::read_to_string(path)?)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        match &self.geometry {
            Geometry::Analytic { spacing, .. } if !(*spacing > 0.0) => {
                return Err(Error::Config(format!("grid spacing must be positive, got {spacing}")))
            }
            Geometry::File { path } if !self.resolve(path).is_file() => {
                return Err(Error::Config(format!("geometry file {} does not exist", self.resolve(path).display())))
            }
            _ => {}
        }
        self.simulation.validate()?;
        self.parameters.validate()?;
        if let Some(p) = &self.initial {
            p.validate()?;
        }
        if self.observation.every_nth == 0 {
            return Err(Error::Config("observation every_nth must be at least 1".into()));
        }
        self.objective.extension.validate()?;
        self.optimizer.validate()?;
        self.batch.validate()?;
        self.gradcheck.validate()?;
        Ok(())
    }

    pub fn sdf(&self) -> Result<SignedDistanceGrid> {
        match &self.geometry {
            Geometry::Analytic { shape, spacing, padding } => SignedDistanceGrid::from_shape(shape, *spacing, *padding),
            Geometry::File { path } => SignedDistanceGrid::load(self.resolve(path)),
        }
    }

    pub fn grid(&self) -> Result<Arc<SimulationGrid>> {
        Ok(Arc::new(SimulationGrid::new(self.sdf()?, &self.dirichlet)?))
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(self.grid()?, self.simulation.clone())
    }

    pub fn initial_parameters(&self) -> ParameterSet {
        self.initial.clone().unwrap_or_else(|| self.parameters.clone())
    }

    /// Explicit cameras followed by the seeded random ones.
    pub fn cameras(&self, grid: &SimulationGrid) -> Result<Vec<DepthCamera>> {
        let mut out = self.observation.cameras.iter().map(CameraConfig::build).collect::<Result<Vec<_>>>()?;
        if let Some(r) = &self.observation.random_cameras {
            let mut rng = ChaCha8Rng::seed_from_u64(self.observation.seed ^ 0x00ca_7e7a);
            let up = crate::dynamics::simulate::ground_normal(&self.parameters);
            for _ in 0..r.count {
                out.push(hemisphere_camera(grid.centroid(), up, r.distance, &r.template, &mut rng)?);
            }
        }
        Ok(out)
    }

    /// Renders the configured cameras over a trajectory.
    pub fn observe(&self, sim: &Simulator, trajectory: &TrajectoryRecord) -> Result<ObservationSequence> {
        let cameras = self.cameras(&sim.grid)?;
        let samples = extract_surface_samples(&sim.grid);
        generate_observations(&sim.grid, &samples, trajectory, &cameras, self.observation.every_nth, self.observation.seed)
    }

    /// Simulates the ground truth and renders it.
    pub fn synthesize(&self, sim: &Simulator) -> Result<ObservationSequence> {
        let traj = sim.simulate(&self.parameters, false)?;
        self.observe(sim, &traj)
    }

    pub fn objective(&self, sim: Simulator, observations: ObservationSequence) -> Result<Objective> {
        Objective::new(sim, observations, self.objective)
    }
}

fn camera(position: [f64; 3], look_at: [f64; 3], res: usize, noise_sigma: f64) -> CameraConfig {
    CameraConfig {
        position,
        look_at,
        up: [0.0, 0.0, 1.0],
        fov_deg: 45.0,
        res_x: res,
        res_y: res,
        noise_sigma,
        splat_radius: 0.75,
    }
}

fn base(name: &str, geometry: Geometry, parameters: ParameterSet, simulation: SimulationSettings) -> SceneConfig {
    SceneConfig {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        geometry,
        dirichlet: DirichletRegion::None,
        parameters,
        initial: None,
        simulation,
        observation: ObservationSettings::default(),
        objective: ObjectiveOptions::default(),
        optimizer: OptimizerConfig::default(),
        batch: BatchConfig::default(),
        gradcheck: GradcheckConfig::default(),
        calibration: None,
        output: default_output(),
        base_dir: PathBuf::new(),
    }
}

/// Torus dropped onto the ground; single-parameter Young's modulus recovery.
pub fn torus() -> SceneConfig {
    let shape = Shape::Torus { center: [0.0, 0.0, 3.0], major_radius: 4.5, minor_radius: 1.8 };
    let params = ParameterSet {
        gravity: Vec3::new(0.0, 0.0, -9.81),
        youngs_modulus: 5000.0,
        initial_velocity: Vec3::new(1.0, 0.0, -6.0),
        ..Default::default()
    };
    let sim = SimulationSettings {
        dt: 0.01,
        steps: 40,
        ground: Some(ContactSettings { stiffness: 1e4, softness: 8.0 }),
        ..Default::default()
    };
    let mut c = base("torus", Geometry::Analytic { shape, spacing: 1.0, padding: 2 }, params, sim);
    c.observation.cameras = vec![camera([14.0, -16.0, 14.0], [0.0, 0.0, 1.5], 50, 0.1)];
    c.objective.extension = ExtensionOptions { phi_max: 5.0, ..Default::default() };
    c.optimizer = OptimizerConfig { algorithm: Algorithm::Rprop, iterations: 30, ..Default::default() };
    c.batch = BatchConfig {
        runs: 20,
        seed: 7,
        perturbations: [(Param::YoungsModulus, Perturbation::LogUniform { low: 500.0, high: 50000.0 })].into(),
    };
    c
}

/// Ball bouncing on a ground plane; multi-parameter recovery.
pub fn ball() -> SceneConfig {
    let shape = Shape::Sphere { center: [0.0, 0.0, 4.3], radius: 3.6 };
    let params = ParameterSet {
        gravity: Vec3::new(0.0, 0.0, -9.81),
        youngs_modulus: 2000.0,
        rayleigh_stiffness: 0.01,
        initial_velocity: Vec3::new(3.0, 0.0, -16.0),
        ..Default::default()
    };
    let sim = SimulationSettings { dt: 0.01, steps: 20, ..Default::default() };
    let mut c = base("ball", Geometry::Analytic { shape, spacing: 1.0, padding: 2 }, params, sim);
    c.observation.cameras = vec![camera([12.0, -14.0, 10.0], [0.0, 0.0, 2.5], 50, 0.0)];
    c.objective.extension = ExtensionOptions { phi_max: 2.0, ..Default::default() };
    c.optimizer = OptimizerConfig {
        algorithm: Algorithm::Rprop,
        iterations: 80,
        parameters: vec![Param::GravityZ, Param::YoungsModulus, Param::RayleighStiffness],
        ..Default::default()
    };
    c.batch = BatchConfig {
        runs: 20,
        seed: 11,
        perturbations: [
            (Param::YoungsModulus, Perturbation::LogUniform { low: 200.0, high: 20000.0 }),
            (Param::GravityZ, Perturbation::Uniform { low: -14.0, high: -6.0 }),
            (Param::RayleighStiffness, Perturbation::Uniform { low: 0.0, high: 0.05 }),
        ]
        .into(),
    };
    c
}

/// Tree anchored at its base bending under gravity.
pub fn tree() -> SceneConfig {
    let shape = Shape::Tree {
        base: [0.0, 0.0, 0.0],
        direction: [0.6, 0.0, 1.0],
        trunk_length: 7.0,
        trunk_radius: 1.2,
        crown_radius: 2.2,
    };
    let params = ParameterSet {
        gravity: Vec3::new(0.0, 0.0, -9.81),
        youngs_modulus: 4000.0,
        ..Default::default()
    };
    let sim = SimulationSettings { dt: 0.04, steps: 70, ground: None, ..Default::default() };
    let mut c = base("tree", Geometry::Analytic { shape, spacing: 1.0, padding: 2 }, params, sim);
    c.dirichlet = DirichletRegion::Box { min: [-3.0, -3.0, -3.0], max: [3.0, 3.0, 1.2] };
    c.observation.cameras = vec![camera([18.0, -20.0, 8.0], [1.5, 0.0, 5.0], 50, 3.0)];
    c.observation.every_nth = 10;
    c
}

/// Short cantilever bar for gradient checks.
pub fn bar() -> SceneConfig {
    let shape = Shape::Bar { start: [0.0, 0.0, 0.0], length: 8.0, half_width: 1.3, half_height: 1.3 };
    let params = ParameterSet {
        gravity: Vec3::new(0.0, 0.0, -9.81),
        youngs_modulus: 3000.0,
        rayleigh_mass: 0.05,
        rayleigh_stiffness: 0.002,
        initial_velocity: Vec3::new(0.0, 0.5, 0.0),
        ..Default::default()
    };
    let sim = SimulationSettings {
        dt: 0.02,
        steps: 10,
        corotation: false,
        ground: None,
        solver: crate::dynamics::SolverOptions { tolerance: 1e-12, max_iter_factor: 50 },
        ..Default::default()
    };
    let mut c = base("bar", Geometry::Analytic { shape, spacing: 1.0, padding: 2 }, params, sim);
    c.dirichlet = DirichletRegion::HalfSpace { point: [1.2, 0.0, 0.0], normal: [1.0, 0.0, 0.0] };
    c.initial = Some(ParameterSet {
        gravity: Vec3::new(0.0, 0.0, -8.0),
        youngs_modulus: 2400.0,
        mass_density: 1.1,
        rayleigh_mass: 0.07,
        rayleigh_stiffness: 0.003,
        initial_velocity: Vec3::new(0.0, 0.7, 0.0),
        ..c.parameters.clone()
    });
    c.observation.cameras = vec![camera([4.0, -14.0, 8.0], [4.0, 0.0, 0.0], 50, 0.0)];
    c.objective.extension = ExtensionOptions { phi_max: 3.0, tolerance: 1e-12, max_sweeps: 5000 };
    c.gradcheck.parameters = vec![
        Param::YoungsModulus,
        Param::MassDensity,
        Param::GravityZ,
        Param::RayleighMass,
        Param::RayleighStiffness,
        Param::VelocityY,
    ];
    c.gradcheck.forward_steps = [
        (Param::MassDensity, 0.01),
        (Param::GravityZ, 0.05),
        (Param::RayleighMass, 0.001),
        (Param::RayleighStiffness, 1e-4),
        (Param::VelocityY, 0.01),
    ]
    .into();
    c
}

pub fn preset(name: &str) -> Option<SceneConfig> {
    match name {
        "torus" => Some(torus()),
        "ball" => Some(ball()),
        "tree" => Some(tree()),
        "bar" => Some(bar()),
        _ => None,
    }
}

pub const PRESETS: [&str; 4] = ["torus", "ball", "tree", "bar"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_and_validate() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            c.validate().unwrap();
            let json = c.to_json().unwrap();
            let back = SceneConfig::from_json(&json).unwrap();
            assert_eq!(back, c, "{name}");
            assert_eq!(back.to_json().unwrap(), json);
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&torus().to_json().unwrap()).unwrap();
        v["simulaton"] = serde_json::json!({});
        assert!(SceneConfig::from_json(&v.to_string()).is_err());
        let mut c = torus();
        c.simulation.steps = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = torus();
        c.simulation.theta = 1.0;
        assert!(c.validate().is_err());
        let mut c = torus();
        c.schema_version = 2;
        assert!(c.validate().is_err());
        let mut c = torus();
        c.geometry = Geometry::File { path: "does/not/exist.grid".into() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let json = r#"{
            "schema_version": 1,
            "geometry": {"source": "analytic", "shape": {"kind": "sphere", "center": [0, 0, 3], "radius": 2}, "spacing": 1.0},
            "parameters": {"gravity": [0, 0, -9.81], "youngs_modulus": 1000, "poisson_ratio": 0.3, "mass_density": 1,
                "rayleigh_mass": 0, "rayleigh_stiffness": 0, "ground_height": 0, "ground_theta": 0, "ground_phi": 0,
                "initial_velocity": [0, 0, 0], "initial_angular_velocity": [0, 0, 0]}
        }"#;
        let c = SceneConfig::from_json(json).unwrap();
        c.validate().unwrap();
        assert_eq!(c.simulation, SimulationSettings::default());
        assert_eq!(c.output, PathBuf::from("out"));
    }

    #[test]
    fn torus_has_at_most_700_elements() {
        let g = torus().grid().unwrap();
        assert!(g.num_cells() <= 700, "{}", g.num_cells());
    }
}
