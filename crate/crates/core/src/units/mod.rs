//! Conversion between virtual simulation units and SI units.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adjoint::ParameterSet;
use crate::error::{Error, Result};
use crate::grid::{SignedDistanceGrid, SimulationGrid};
use crate::math::Vec3;

/// Physical measurements of the real object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInput {
    /// Size of the object along its longest axis in meters.
    pub size: f64,
    /// Mass in kilograms.
    pub mass: f64,
    /// Camera framerate in Hz.
    pub framerate: f64,
}

/// Scale factors from virtual to SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCalibration {
    pub real_size: f64,
    pub virtual_size: f64,
    /// Axis (0, 1, 2) along which the virtual size was measured.
    pub axis: usize,
    /// Extent of the object along x, y and z in virtual meters.
    pub virtual_extent: [f64; 3],
    pub real_mass: f64,
    /// Virtual mass `M′ = m V`.
    pub virtual_mass: f64,
    /// `V = f_size³ ∫ 1 dx`.
    pub volume: f64,
    pub density: f64,
    pub framerate: f64,
    pub f_size: f64,
    pub f_mass: f64,
    pub f_time: f64,
}

/// Bounding box of the `φ < 0` region, with faces placed at the linearly interpolated zero crossings.
pub fn negative_extent(sdf: &SignedDistanceGrid) -> Option<(Vec3, Vec3)> {
    let dims = sdf.dims();
    let h = sdf.spacing();
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for n in 0..sdf.node_count() {
        let ijk = sdf.node_coords(n);
        let v = sdf.value(ijk[0], ijk[1], ijk[2]);
        if v >= 0.0 {
            continue;
        }
        let x = sdf.node_position(n);
        for a in 0..3 {
            let mut reach = [x[a], x[a]];
            for (s, dir) in [(0, -1i64), (1, 1)] {
                let j = ijk[a] as i64 + dir;
                if j < 0 || j >= dims[a] as i64 {
                    continue;
                }
                let mut nb = ijk;
                nb[a] = j as usize;
                let w = sdf.value(nb[0], nb[1], nb[2]);
                if w >= 0.0 {
                    reach[s] = x[a] + dir as f64 * h * v / (v - w);
                }
            }
            lo[a] = lo[a].min(reach[0]);
            hi[a] = hi[a].max(reach[1]);
        }
    }
    lo.x.is_finite().then_some((lo, hi))
}

/// Derives scale factors from the rest shape, the real size and mass, the mass density `m` and the framerate.
pub fn calibrate(grid: &SimulationGrid, input: &CalibrationInput, density: f64) -> Result<UnitCalibration> {
    let CalibrationInput { size, mass, framerate } = *input;
    for (name, v) in [("size", size), ("mass", mass), ("framerate", framerate), ("density", density)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("calibration {name} must be positive, got {v}")));
        }
    }
    let (lo, hi) = negative_extent(grid.sdf()).ok_or_else(|| Error::Domain("object has no interior".into()))?;
    let extent = hi - lo;
    let axis = extent.imax();
    let virtual_size = extent[axis];
    let integral = grid.volume();
    if !(virtual_size > 0.0 && integral > 0.0) {
        return Err(Error::Domain("degenerate object extent".into()));
    }
    let f_size = size / virtual_size;
    let volume = f_size.powi(3) * integral;
    let virtual_mass = density * volume;
    Ok(UnitCalibration {
        real_size: size,
        virtual_size,
        axis,
        virtual_extent: [extent.x, extent.y, extent.z],
        real_mass: mass,
        virtual_mass,
        volume,
        density,
        framerate,
        f_size,
        f_mass: mass / virtual_mass,
        f_time: 1.0,
    })
}

impl UnitCalibration {
    /// Calibration from explicit factors, for the identity and for tests.
    pub fn from_factors(f_size: f64, f_mass: f64, f_time: f64) -> Result<Self> {
        if !(f_size > 0.0 && f_mass > 0.0 && f_time > 0.0) {
            return Err(Error::Config("scale factors must be positive".into()));
        }
        Ok(Self {
            real_size: f_size,
            virtual_size: 1.0,
            axis: 0,
            virtual_extent: [1.0; 3],
            real_mass: f_mass,
            virtual_mass: 1.0,
            volume: 1.0,
            density: 1.0,
            framerate: 1.0,
            f_size,
            f_mass,
            f_time,
        })
    }

    /// Simulation time step matching the camera framerate.
    pub fn time_step(&self) -> f64 {
        1.0 / (self.framerate * self.f_time)
    }

    /// Pascal per virtual Young's modulus unit.
    pub fn young_factor(&self) -> f64 {
        self.f_mass * self.f_size / (self.f_time * self.f_time)
    }

    /// m/s² per virtual acceleration unit.
    pub fn gravity_factor(&self) -> f64 {
        self.f_size / (self.f_time * self.f_time)
    }
}

pub fn young_to_si(k: f64, cal: &UnitCalibration) -> f64 {
    k * cal.young_factor()
}

pub fn young_from_si(pascal: f64, cal: &UnitCalibration) -> f64 {
    pascal / cal.young_factor()
}

pub fn gravity_to_si(g: f64, cal: &UnitCalibration) -> f64 {
    g * cal.gravity_factor()
}

pub fn gravity_from_si(g: f64, cal: &UnitCalibration) -> f64 {
    g / cal.gravity_factor()
}

pub fn length_to_si(x: f64, cal: &UnitCalibration) -> f64 {
    x * cal.f_size
}

/// Plain-text table of the calibration inputs and the parameters in SI units where possible.
pub fn si_report(cal: &UnitCalibration, p: &ParameterSet, with_ground: bool) -> String {
    let mut s = String::new();
    let e = cal.virtual_extent.map(|v| v * cal.f_size);
    let g = p.gravity.norm();
    let rows: Vec<(&str, String)> = [
        ("camera framerate", format!("{} Hz", cal.framerate)),
        ("object size", format!("{:.3}x{:.3}x{:.3} m", e[0], e[1], e[2])),
        ("object mass", format!("{} kg", cal.real_mass)),
        ("f_size", format!("{:.6e} m/m'", cal.f_size)),
        ("f_mass", format!("{:.6e} kg/kg'", cal.f_mass)),
        ("f_time", format!("{} s/s'", cal.f_time)),
        ("gravity", format!("{:.4} m/s^2 (virtual {:.4})", gravity_to_si(g, cal), g)),
        ("young's modulus", format!("{:.4} Pa (virtual {:.4})", young_to_si(p.youngs_modulus, cal), p.youngs_modulus)),
        ("mass damping", format!("{:.4}", p.rayleigh_mass)),
        ("stiffness damping", format!("{:.4}", p.rayleigh_stiffness)),
    ]
    .into_iter()
    .chain(with_ground.then(|| {
        [
            ("ground height", format!("{:.4} m", length_to_si(p.ground_height, cal))),
            ("ground theta", format!("{:.2} deg", p.ground_theta.to_degrees())),
            ("ground phi", format!("{:.2} deg", p.ground_phi.to_degrees())),
        ]
    }).into_iter().flatten())
    .collect();
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    for (name, value) in rows {
        let _ = writeln!(s, "{name:>width$} | {value}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DirichletRegion, Shape};
    use std::f64::consts::PI;

    fn grid(shape: Shape, h: f64) -> SimulationGrid {
        SimulationGrid::new(SignedDistanceGrid::from_shape(&shape, h, 2).unwrap(), &DirichletRegion::None).unwrap()
    }

    #[test]
    fn cube_of_ten_voxels_gives_a_tenth_of_a_meter_per_voxel() {
        for center in [[0.0; 3], [0.37, -0.21, 0.6]] {
            let g = grid(Shape::Box { center, half_extents: [5.0; 3] }, 1.0);
            let cal = calibrate(&g, &CalibrationInput { size: 1.0, mass: 1.0, framerate: 60.0 }, 1.0).unwrap();
            assert!((cal.virtual_size - 10.0).abs() < 1e-9, "{}", cal.virtual_size);
            assert!((cal.f_size - 0.1).abs() < 1e-10);
        }
    }

    #[test]
    fn matching_virtual_mass_gives_unit_mass_factor() {
        let g = grid(Shape::Box { center: [0.0; 3], half_extents: [5.0, 3.0, 2.0] }, 1.0);
        let probe = calibrate(&g, &CalibrationInput { size: 2.0, mass: 1.0, framerate: 30.0 }, 1.0).unwrap();
        let m = 0.7 / probe.volume;
        let cal = calibrate(&g, &CalibrationInput { size: 2.0, mass: 0.7, framerate: 30.0 }, m).unwrap();
        assert!((cal.f_mass - 1.0).abs() < 1e-12);
        assert_eq!(cal.axis, 0);
        assert!((cal.time_step() - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_volume_from_weights() {
        let r = 8.0;
        let g = grid(Shape::Sphere { center: [0.1, 0.2, 0.3], radius: r }, 1.0);
        let cal = calibrate(&g, &CalibrationInput { size: 0.5, mass: 1.0, framerate: 60.0 }, 1.0).unwrap();
        let exact = 4.0 / 3.0 * PI * r.powi(3) * cal.f_size.powi(3);
        assert!((cal.volume - exact).abs() < 0.02 * exact, "{} vs {exact}", cal.volume);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let g = grid(Shape::Sphere { center: [0.0; 3], radius: 3.0 }, 1.0);
        let ok = CalibrationInput { size: 1.0, mass: 1.0, framerate: 60.0 };
        assert!(calibrate(&g, &CalibrationInput { size: 0.0, ..ok }, 1.0).is_err());
        assert!(calibrate(&g, &ok, -1.0).is_err());
        let empty = SignedDistanceGrid::from_fn([4, 4, 4], 1.0, Vec3::zeros(), |_| 1.0).unwrap();
        assert!(negative_extent(&empty).is_none());
    }

    #[test]
    fn conversions_round_trip() {
        let cal = UnitCalibration::from_factors(7.3, 0.041, 1.0).unwrap();
        for v in [1e-6, 0.3, 7.817, 5000.0, 3.2e7] {
            assert!((young_from_si(young_to_si(v, &cal), &cal) - v).abs() <= 2.0 * f64::EPSILON * v);
            assert!((gravity_from_si(gravity_to_si(v, &cal), &cal) - v).abs() <= 2.0 * f64::EPSILON * v);
        }
        let id = UnitCalibration::from_factors(1.0, 1.0, 1.0).unwrap();
        assert_eq!(young_to_si(123.25, &id), 123.25);
        assert_eq!(gravity_to_si(-9.81, &id), -9.81);
        // (k/g) in SI equals (k/g) virtual times f_mass
        let (k, g) = (7.817, -1.536);
        let ratio = young_to_si(k, &cal) / gravity_to_si(g, &cal);
        assert!((ratio - k / g * cal.f_mass).abs() < 1e-12 * ratio.abs());
    }

    #[test]
    fn report_lists_si_values() {
        let cal = UnitCalibration::from_factors(2.0, 3.0, 1.0).unwrap();
        let p = ParameterSet { youngs_modulus: 10.0, gravity: Vec3::new(0.0, 0.0, -1.5), ..Default::default() };
        let r = si_report(&cal, &p, true);
        assert!(r.contains("60.0000 Pa"));
        assert!(r.contains("3.0000 m/s^2"));
        assert!(r.contains("ground phi"));
        assert!(!si_report(&cal, &p, false).contains("ground"));
    }
}
