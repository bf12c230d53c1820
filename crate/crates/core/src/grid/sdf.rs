//! Node-sampled signed distance grids, analytic generators and the text grid format.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{corner_offset, interpolate_scalar, interpolate_scalar_gradient, Vec3};

/// Signed distance values sampled at the nodes of a regular lattice.
/// Negative inside the object.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceGrid {
    dims: [usize; 3],
    spacing: f64,
    origin: Vec3,
    values: Vec<f64>,
}

impl SignedDistanceGrid {
    pub fn new(dims: [usize; 3], spacing: f64, origin: Vec3, values: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Construction(format!("grid spacing must be positive, got {spacing}")));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Construction(format!("grid needs at least 2 nodes per axis, got {dims:?}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::Dimension { expected: n, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Construction(format!("non-finite SDF value at node {i}")));
        }
        Ok(Self { dims, spacing, origin, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(dims: [usize; 3], spacing: f64, origin: Vec3, f: impl Fn(&Vec3) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = origin + Vec3::new(i as f64, j as f64, k as f64) * spacing;
                    values.push(f(&p));
                }
            }
        }
        Self::new(dims, spacing, origin, values)
    }

    /// Builds a grid around `shape` with `padding` empty cells on every side.
    pub fn from_shape(shape: &Shape, spacing: f64, padding: usize) -> Result<Self> {
        let (lo, hi) = shape.bounds();
        let pad = padding as f64 * spacing;
        let lo = lo - Vec3::repeat(pad);
        let hi = hi + Vec3::repeat(pad);
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = ((hi[a] - lo[a]) / spacing).ceil() as usize + 1;
        }
        // center the lattice on the padded box
        let span = Vec3::new(
            (dims[0] - 1) as f64 * spacing,
            (dims[1] - 1) as f64 * spacing,
            (dims[2] - 1) as f64 * spacing,
        );
        let origin = (lo + hi) * 0.5 - span * 0.5;
        Self::from_fn(dims, spacing, origin, |p| shape.distance(p))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_dims(&self) -> [usize; 3] {
        [self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn node_coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn node_position(&self, index: usize) -> Vec3 {
        let [i, j, k] = self.node_coords(index);
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.node_index(i, j, k)]
    }

    #[inline]
    pub fn cell_index(&self, cell: [usize; 3]) -> usize {
        let cd = self.cell_dims();
        cell[0] + cd[0] * (cell[1] + cd[1] * cell[2])
    }

    #[inline]
    pub fn cell_coords(&self, index: usize) -> [usize; 3] {
        let cd = self.cell_dims();
        [index % cd[0], (index / cd[0]) % cd[1], index / (cd[0] * cd[1])]
    }

    /// Lattice node indices of the 8 corners of `cell`.
    #[inline]
    pub fn cell_corner_nodes(&self, cell: [usize; 3]) -> [usize; 8] {
        let mut out = [0; 8];
        for (c, o) in out.iter_mut().enumerate() {
            let off = corner_offset(c);
            *o = self.node_index(cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]);
        }
        out
    }

    #[inline]
    pub fn cell_corner_values(&self, cell: [usize; 3]) -> [f64; 8] {
        let nodes = self.cell_corner_nodes(cell);
        let mut out = [0.0; 8];
        for c in 0..8 {
            out[c] = self.values[nodes[c]];
        }
        out
    }

    /// World position of the minimum corner of `cell`.
    #[inline]
    pub fn cell_origin(&self, cell: [usize; 3]) -> Vec3 {
        self.origin + Vec3::new(cell[0] as f64, cell[1] as f64, cell[2] as f64) * self.spacing
    }

    /// Cell containing `x` and the local coordinates of `x` inside it.
    pub fn locate(&self, x: &Vec3) -> Result<([usize; 3], Vec3)> {
        let tol = 1e-9;
        let mut cell = [0usize; 3];
        let mut xi = Vec3::zeros();
        for a in 0..3 {
            let t = (x[a] - self.origin[a]) / self.spacing;
            let max = (self.dims[a] - 1) as f64;
            if !t.is_finite() || t < -tol || t > max + tol {
                return Err(Error::Domain(format!(
                    "point ({:.4}, {:.4}, {:.4}) lies outside the grid",
                    x[0], x[1], x[2]
                )));
            }
            let t = t.clamp(0.0, max);
            let c = (t.floor() as usize).min(self.dims[a] - 2);
            cell[a] = c;
            xi[a] = t - c as f64;
        }
        Ok((cell, xi))
    }

    /// Trilinear interpolation of the node values at `x`.
    pub fn sample(&self, x: &Vec3) -> Result<f64> {
        let (cell, xi) = self.locate(x)?;
        Ok(interpolate_scalar(&self.cell_corner_values(cell), &xi))
    }

    /// World-space gradient of the trilinear interpolant at `x`.
    pub fn sample_gradient(&self, x: &Vec3) -> Result<Vec3> {
        let (cell, xi) = self.locate(x)?;
        Ok(interpolate_scalar_gradient(&self.cell_corner_values(cell), &xi) / self.spacing)
    }

    /// Returns a copy with `offset` added to every value (positive offsets erode).
    pub fn offset(&self, offset: f64) -> Result<Self> {
        Self::new(
            self.dims,
            self.spacing,
            self.origin,
            self.values.iter().map(|v| v + offset).collect(),
        )
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        write_grid(w, self.dims, self.spacing, &self.origin, 1, &self.values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let g = read_grid(r)?;
        if g.components != 1 {
            return Err(Error::Parse { line: 5, msg: format!("expected 1 component, found {}", g.components) });
        }
        Self::new(g.dims, g.spacing, g.origin, g.values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

/// Contents of a grid file with an arbitrary number of components per node.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub dims: [usize; 3],
    pub spacing: f64,
    pub origin: Vec3,
    pub components: usize,
    pub values: Vec<f64>,
}

const GRID_MAGIC: &str = "SSCGRID 1";

/// Writes the text grid format:
///
/// ```text
/// SSCGRID 1
/// dims <nx> <ny> <nz>
/// spacing <h>
/// origin <ox> <oy> <oz>
/// components <c>
/// <c values per line, nodes in x-fastest order>
/// ```
pub fn write_grid(
    mut w: impl Write,
    dims: [usize; 3],
    spacing: f64,
    origin: &Vec3,
    components: usize,
    values: &[f64],
) -> Result<()> {
    let n = dims[0] * dims[1] * dims[2] * components;
    if values.len() != n {
        return Err(Error::Dimension { expected: n, got: values.len() });
    }
    writeln!(w, "{GRID_MAGIC}")?;
    writeln!(w, "dims {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(w, "spacing {spacing:e}")?;
    writeln!(w, "origin {:e} {:e} {:e}", origin[0], origin[1], origin[2])?;
    writeln!(w, "components {components}")?;
    for chunk in values.chunks(components) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(r: impl Read) -> Result<GridFile> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, Vec<String>)> {
        loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line?;
                    let t = line.trim();
                    if t.is_empty() {
                        continue;
                    }
                    return Ok((i + 1, t.split_whitespace().map(str::to_owned).collect()));
                }
                None => {
                    return Err(Error::Parse { line: 0, msg: format!("unexpected end of file, expected {expect}") })
                }
            }
        }
    };
    let (ln, magic) = next("header")?;
    if magic.join(" ") != GRID_MAGIC {
        return Err(Error::Parse { line: ln, msg: format!("expected '{GRID_MAGIC}'") });
    }
    let parse_f = |ln: usize, s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|e| Error::Parse { line: ln, msg: format!("bad number '{s}': {e}") })
    };
    let parse_u = |ln: usize, s: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|e| Error::Parse { line: ln, msg: format!("bad integer '{s}': {e}") })
    };
    let field = |ln: usize, toks: &[String], key: &str, n: usize| -> Result<()> {
        if toks.first().map(String::as_str) != Some(key) || toks.len() != n + 1 {
            return Err(Error::Parse { line: ln, msg: format!("expected '{key}' with {n} values") });
        }
        Ok(())
    };
    let (ln, t) = next("dims")?;
    field(ln, &t, "dims", 3)?;
    let dims = [parse_u(ln, &t[1])?, parse_u(ln, &t[2])?, parse_u(ln, &t[3])?];
    let (ln, t) = next("spacing")?;
    field(ln, &t, "spacing", 1)?;
    let spacing = parse_f(ln, &t[1])?;
    let (ln, t) = next("origin")?;
    field(ln, &t, "origin", 3)?;
    let origin = Vec3::new(parse_f(ln, &t[1])?, parse_f(ln, &t[2])?, parse_f(ln, &t[3])?);
    let (ln, t) = next("components")?;
    field(ln, &t, "components", 1)?;
    let components = parse_u(ln, &t[1])?;
    let n = dims[0] * dims[1] * dims[2];
    let mut values = Vec::with_capacity(n * components);
    for _ in 0..n {
        let (ln, t) = next("node values")?;
        if t.len() != components {
            return Err(Error::Parse { line: ln, msg: format!("expected {components} values, found {}", t.len()) });
        }
        for s in &t {
            values.push(parse_f(ln, s)?);
        }
    }
    Ok(GridFile { dims, spacing, origin, components, values })
}

/// Analytic solids used to generate rest shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Torus around the z axis.
    Torus { center: [f64; 3], major_radius: f64, minor_radius: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
    /// Axis-aligned bar along x starting at `start`.
    Bar { start: [f64; 3], length: f64, half_width: f64, half_height: f64 },
    Ellipsoid { center: [f64; 3], radii: [f64; 3] },
    /// A capsule trunk from `base` along `direction` topped by a spherical crown.
    Tree {
        base: [f64; 3],
        direction: [f64; 3],
        trunk_length: f64,
        trunk_radius: f64,
        crown_radius: f64,
    },
}

fn v3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn box_distance(p: &Vec3, center: &Vec3, half: &Vec3) -> f64 {
    let q = (p - center).abs() - half;
    let outside = Vec3::new(q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)).norm();
    outside + q.max().min(0.0)
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

impl Shape {
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - v3(center)).norm() - radius,
            Shape::Torus { center, major_radius, minor_radius } => {
                let d = p - v3(center);
                let q = ((d[0] * d[0] + d[1] * d[1]).sqrt() - major_radius).hypot(d[2]);
                q - minor_radius
            }
            Shape::Box { center, half_extents } => box_distance(p, &v3(center), &v3(half_extents)),
            Shape::Bar { start, length, half_width, half_height } => {
                let s = v3(start);
                let half = Vec3::new(0.5 * length, *half_width, *half_height);
                box_distance(p, &(s + Vec3::new(0.5 * length, 0.0, 0.0)), &half)
            }
            Shape::Ellipsoid { center, radii } => {
                // first-order distance estimate; exact on the surface and along the axes
                let r = v3(radii);
                let d = p - v3(center);
                let k0 = Vec3::new(d[0] / r[0], d[1] / r[1], d[2] / r[2]).norm();
                let k1 = Vec3::new(d[0] / (r[0] * r[0]), d[1] / (r[1] * r[1]), d[2] / (r[2] * r[2])).norm();
                if k1 == 0.0 {
                    -r.min()
                } else {
                    k0 * (k0 - 1.0) / k1
                }
            }
            Shape::Tree { base, direction, trunk_length, trunk_radius, crown_radius } => {
                let b = v3(base);
                let dir = v3(direction).normalize();
                let top = b + dir * *trunk_length;
                let trunk = segment_distance(p, &b, &top) - trunk_radius;
                let crown = (p - top).norm() - crown_radius;
                trunk.min(crown)
            }
        }
    }

    /// Axis-aligned bounding box of the solid.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Shape::Sphere { center, radius } => (v3(center) - Vec3::repeat(*radius), v3(center) + Vec3::repeat(*radius)),
            Shape::Torus { center, major_radius, minor_radius } => {
                let e = Vec3::new(major_radius + minor_radius, major_radius + minor_radius, *minor_radius);
                (v3(center) - e, v3(center) + e)
            }
            Shape::Box { center, half_extents } => (v3(center) - v3(half_extents), v3(center) + v3(half_extents)),
            Shape::Bar { start, length, half_width, half_height } => {
                let s = v3(start);
                (
                    s - Vec3::new(0.0, *half_width, *half_height),
                    s + Vec3::new(*length, *half_width, *half_height),
                )
            }
            Shape::Ellipsoid { center, radii } => (v3(center) - v3(radii), v3(center) + v3(radii)),
            Shape::Tree { base, direction, trunk_length, trunk_radius, crown_radius } => {
                let b = v3(base);
                let top = b + v3(direction).normalize() * *trunk_length;
                let mut lo = b.inf(&top) - Vec3::repeat(*trunk_radius);
                let mut hi = b.sup(&top) + Vec3::repeat(*trunk_radius);
                lo = lo.inf(&(top - Vec3::repeat(*crown_radius)));
                hi = hi.sup(&(top + Vec3::repeat(*crown_radius)));
                (lo, hi)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_grid() -> SignedDistanceGrid {
        SignedDistanceGrid::from_fn([5, 4, 6], 0.5, Vec3::new(-1.0, 0.5, 2.0), |p| {
            0.3 * p[0] - 1.2 * p[1] + 0.7 * p[2] + 0.1
        })
        .unwrap()
    }

    #[test]
    fn sampling_reproduces_nodes() {
        let g = linear_grid();
        for idx in 0..g.node_count() {
            let p = g.node_position(idx);
            assert_eq!(g.sample(&p).unwrap(), g.values()[idx]);
        }
    }

    #[test]
    fn sampling_constant_cell_center() {
        let g = SignedDistanceGrid::from_fn([3, 3, 3], 1.0, Vec3::zeros(), |_| -2.5).unwrap();
        assert_eq!(g.sample(&Vec3::new(0.5, 0.5, 0.5)).unwrap(), -2.5);
    }

    #[test]
    fn sampling_linear_field_is_exact() {
        let g = linear_grid();
        let f = |p: &Vec3| 0.3 * p[0] - 1.2 * p[1] + 0.7 * p[2] + 0.1;
        let mut s = 0.123_f64;
        for _ in 0..200 {
            let mut r = || {
                s = (s * 9301.0 + 49297.0) % 233280.0;
                s / 233280.0
            };
            let p = Vec3::new(-1.0 + 2.0 * r(), 0.5 + 1.5 * r(), 2.0 + 2.5 * r());
            assert!((g.sample(&p).unwrap() - f(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_bounds_is_domain_error() {
        let g = linear_grid();
        assert!(matches!(g.sample(&Vec3::new(-5.0, 1.0, 3.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_spacing_and_values() {
        assert!(SignedDistanceGrid::new([2, 2, 2], 0.0, Vec3::zeros(), vec![0.0; 8]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(SignedDistanceGrid::new([2, 2, 2], 1.0, Vec3::zeros(), v).is_err());
    }

    #[test]
    fn grid_file_round_trip() {
        let g = linear_grid();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let back = SignedDistanceGrid::read_from(buf.as_slice()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn malformed_grid_file_reports_line() {
        let text = "SSCGRID 1\ndims 2 2 2\nspacing 1\norigin 0 0 0\ncomponents 1\n0\n0\nx\n";
        match SignedDistanceGrid::read_from(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shapes_are_negative_inside() {
        let shapes = [
            Shape::Sphere { center: [0.0; 3], radius: 2.0 },
            Shape::Torus { center: [0.0; 3], major_radius: 3.0, minor_radius: 1.0 },
            Shape::Box { center: [0.0; 3], half_extents: [1.0, 2.0, 3.0] },
            Shape::Ellipsoid { center: [0.0; 3], radii: [3.0, 2.0, 1.0] },
        ];
        let inside = [Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0), Vec3::zeros(), Vec3::zeros()];
        for (s, p) in shapes.iter().zip(inside) {
            assert!(s.distance(&p) < 0.0, "{s:?}");
            assert!(s.distance(&Vec3::new(10.0, 10.0, 10.0)) > 0.0);
        }
    }
}
