use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic linear material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub mass_density: f64,
}

impl MaterialParams {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, mass_density: f64) -> Result<Self> {
        let m = Self { youngs_modulus, poisson_ratio, mass_density };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        lame_from_young_poisson(self.youngs_modulus, self.poisson_ratio)?;
        if !(self.mass_density > 0.0) {
            return Err(Error::Domain(format!("mass density must be positive, got {}", self.mass_density)));
        }
        Ok(())
    }

    /// `(μ, λ)`.
    pub fn lame(&self) -> Result<(f64, f64)> {
        lame_from_young_poisson(self.youngs_modulus, self.poisson_ratio)
    }
}

/// `μ = k / (2(1+ρ))`, `λ = kρ / ((1+ρ)(1−2ρ))`.
pub fn lame_from_young_poisson(k: f64, rho: f64) -> Result<(f64, f64)> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("Young's modulus must be positive, got {k}")));
    }
    if !(0.0..0.5).contains(&rho) {
        return Err(Error::Domain(format!(
            "Poisson ratio must lie in [0, 0.5), got {rho} (0.5 is incompressible)"
        )));
    }
    let mu = k / (2.0 * (1.0 + rho));
    let lambda = k * rho / ((1.0 + rho) * (1.0 - 2.0 * rho));
    Ok((mu, lambda))
}

/// Partial derivatives `[[∂μ/∂k, ∂μ/∂ρ], [∂λ/∂k, ∂λ/∂ρ]]`.
pub fn lame_derivatives(k: f64, rho: f64) -> [[f64; 2]; 2] {
    let a = 1.0 + rho;
    let b = 1.0 - 2.0 * rho;
    let dmu_dk = 1.0 / (2.0 * a);
    let dmu_drho = -k / (2.0 * a * a);
    let dl_dk = rho / (a * b);
    // d/dρ [ρ / ((1+ρ)(1-2ρ))] = (1 + 2ρ²) / ((1+ρ)²(1-2ρ)²)
    let dl_drho = k * (1.0 + 2.0 * rho * rho) / (a * a * b * b);
    [[dmu_dk, dmu_drho], [dl_dk, dl_drho]]
}
