use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::lame_from_young_poisson;
use crate::math::Vec3;

/// Every quantity the optimizer can control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSet {
    pub gravity: Vec3,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub mass_density: f64,
    /// Mass-proportional Rayleigh coefficient `α₁`.
    pub rayleigh_mass: f64,
    /// Stiffness-proportional Rayleigh coefficient `α₂`.
    pub rayleigh_stiffness: f64,
    pub ground_height: f64,
    pub ground_theta: f64,
    pub ground_phi: f64,
    pub initial_velocity: Vec3,
    pub initial_angular_velocity: Vec3,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self {
            gravity: Vec3::zeros(),
            youngs_modulus: 1000.0,
            poisson_ratio: 0.3,
            mass_density: 1.0,
            rayleigh_mass: 0.0,
            rayleigh_stiffness: 0.0,
            ground_height: 0.0,
            ground_theta: 0.0,
            ground_phi: 0.0,
            initial_velocity: Vec3::zeros(),
            initial_angular_velocity: Vec3::zeros(),
        }
    }
}

/// Scalar coordinates of a [`ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    GravityX,
    GravityY,
    GravityZ,
    YoungsModulus,
    PoissonRatio,
    MassDensity,
    RayleighMass,
    RayleighStiffness,
    GroundHeight,
    GroundTheta,
    GroundPhi,
    VelocityX,
    VelocityY,
    VelocityZ,
    AngularVelocityX,
    AngularVelocityY,
    AngularVelocityZ,
}

impl Param {
    pub const ALL: [Param; 17] = [
        Param::GravityX,
        Param::GravityY,
        Param::GravityZ,
        Param::YoungsModulus,
        Param::PoissonRatio,
        Param::MassDensity,
        Param::RayleighMass,
        Param::RayleighStiffness,
        Param::GroundHeight,
        Param::GroundTheta,
        Param::GroundPhi,
        Param::VelocityX,
        Param::VelocityY,
        Param::VelocityZ,
        Param::AngularVelocityX,
        Param::AngularVelocityY,
        Param::AngularVelocityZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::GravityX => "gravity_x",
            Param::GravityY => "gravity_y",
            Param::GravityZ => "gravity_z",
            Param::YoungsModulus => "youngs_modulus",
            Param::PoissonRatio => "poisson_ratio",
            Param::MassDensity => "mass_density",
            Param::RayleighMass => "rayleigh_mass",
            Param::RayleighStiffness => "rayleigh_stiffness",
            Param::GroundHeight => "ground_height",
            Param::GroundTheta => "ground_theta",
            Param::GroundPhi => "ground_phi",
            Param::VelocityX => "velocity_x",
            Param::VelocityY => "velocity_y",
            Param::VelocityZ => "velocity_z",
            Param::AngularVelocityX => "angular_velocity_x",
            Param::AngularVelocityY => "angular_velocity_y",
            Param::AngularVelocityZ => "angular_velocity_z",
        }
    }

    /// Strictly positive scale parameters, optimized in log space.
    pub fn is_positive_scale(self) -> bool {
        matches!(self, Param::YoungsModulus | Param::MassDensity)
    }

    /// Default feasible interval.
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Param::YoungsModulus | Param::MassDensity => (1e-6, 1e12),
            Param::PoissonRatio => (0.0, 0.49),
            Param::RayleighMass | Param::RayleighStiffness => (0.0, 1e6),
            Param::GroundTheta => (0.0, std::f64::consts::FRAC_PI_2),
            Param::GroundPhi => (-std::f64::consts::PI, std::f64::consts::PI),
            _ => (-1e12, 1e12),
        }
    }
}

impl std::fmt::Display for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl ParameterSet {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::GravityX => self.gravity[0],
            Param::GravityY => self.gravity[1],
            Param::GravityZ => self.gravity[2],
            Param::YoungsModulus => self.youngs_modulus,
            Param::PoissonRatio => self.poisson_ratio,
            Param::MassDensity => self.mass_density,
            Param::RayleighMass => self.rayleigh_mass,
            Param::RayleighStiffness => self.rayleigh_stiffness,
            Param::GroundHeight => self.ground_height,
            Param::GroundTheta => self.ground_theta,
            Param::GroundPhi => self.ground_phi,
            Param::VelocityX => self.initial_velocity[0],
            Param::VelocityY => self.initial_velocity[1],
            Param::VelocityZ => self.initial_velocity[2],
            Param::AngularVelocityX => self.initial_angular_velocity[0],
            Param::AngularVelocityY => self.initial_angular_velocity[1],
            Param::AngularVelocityZ => self.initial_angular_velocity[2],
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        let slot = match p {
            Param::GravityX => &mut self.gravity[0],
            Param::GravityY => &mut self.gravity[1],
            Param::GravityZ => &mut self.gravity[2],
            Param::YoungsModulus => &mut self.youngs_modulus,
            Param::PoissonRatio => &mut self.poisson_ratio,
            Param::MassDensity => &mut self.mass_density,
            Param::RayleighMass => &mut self.rayleigh_mass,
            Param::RayleighStiffness => &mut self.rayleigh_stiffness,
            Param::GroundHeight => &mut self.ground_height,
            Param::GroundTheta => &mut self.ground_theta,
            Param::GroundPhi => &mut self.ground_phi,
            Param::VelocityX => &mut self.initial_velocity[0],
            Param::VelocityY => &mut self.initial_velocity[1],
            Param::VelocityZ => &mut self.initial_velocity[2],
            Param::AngularVelocityX => &mut self.initial_angular_velocity[0],
            Param::AngularVelocityY => &mut self.initial_angular_velocity[1],
            Param::AngularVelocityZ => &mut self.initial_angular_velocity[2],
        };
        *slot = v;
    }

    pub fn with(&self, p: Param, v: f64) -> Self {
        let mut out = self.clone();
        out.set(p, v);
        out
    }

    pub fn validate(&self) -> Result<()> {
        lame_from_young_poisson(self.youngs_modulus, self.poisson_ratio)?;
        if !(self.mass_density > 0.0) {
            return Err(Error::Domain(format!("mass density must be positive, got {}", self.mass_density)));
        }
        if self.rayleigh_mass < 0.0 || self.rayleigh_stiffness < 0.0 {
            return Err(Error::Domain("Rayleigh coefficients must be non-negative".into()));
        }
        if Param::ALL.iter().any(|&p| !self.get(p).is_finite()) {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        Ok(())
    }
}

/// `dJ/dp` for every coordinate, indexed by [`Param::index`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGradient(pub [f64; 17]);

impl ParamGradient {
    pub fn get(&self, p: Param) -> f64 {
        self.0[p.index()]
    }

    pub fn add(&mut self, p: Param, v: f64) {
        self.0[p.index()] += v;
    }

    pub fn add_vec(&mut self, first: Param, v: &Vec3) {
        for a in 0..3 {
            self.0[first.index() + a] += v[a];
        }
    }
}
