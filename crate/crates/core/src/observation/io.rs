use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ObservationFrame, ObservationSequence};
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Writes the line format: frame count, then per frame `t N` and `N` lines `x y z w`.
pub fn write_observations_to(seq: &ObservationSequence, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{}", seq.frames.len())?;
    for f in &seq.frames {
        writeln!(w, "{} {}", f.t, f.points.len())?;
        for (p, wt) in f.points.iter().zip(&f.weights) {
            writeln!(w, "{} {} {} {}", p.x, p.y, p.z, wt)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_observations(seq: &ObservationSequence, path: impl AsRef<Path>) -> Result<()> {
    write_observations_to(seq, File::create(path)?)
}

pub fn read_observations(path: impl AsRef<Path>) -> Result<ObservationSequence> {
    read_observations_from(File::open(path)?)
}

/// Parses the line format. Blank lines and lines starting with `#` are skipped;
/// a missing weight column defaults to 1.
pub fn read_observations_from(r: impl Read) -> Result<ObservationSequence> {
    let mut lines = BufReader::new(r).lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#') => None,
        Ok(s) => Some(Ok((i + 1, s))),
        Err(e) => Some(Err(e)),
    });
    let mut last_line = 0;
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some(Ok((n, s))) => {
                last_line = n;
                Ok((n, s))
            }
            Some(Err(e)) => Err(e.into()),
            None => Err(Error::Parse { line: last_line + 1, msg: format!("unexpected end of file, expected {what}") }),
        }
    };
    let (n, header) = next("frame count")?;
    let count: usize = parse(&header, n, "frame count")?;
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = next("frame header `t N`")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse { line: n, msg: format!("expected `t N`, got {:?}", line.trim()) });
        }
        let t: usize = parse(fields[0], n, "timestep")?;
        let len: usize = parse(fields[1], n, "point count")?;
        let mut points = Vec::with_capacity(len);
        let mut weights = Vec::with_capacity(len);
        for _ in 0..len {
            let (n, line) = next("point `x y z [w]`")?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(Error::Parse { line: n, msg: format!("expected 3 or 4 numbers, got {}", fields.len()) });
            }
            let x: f64 = parse(fields[0], n, "x")?;
            let y: f64 = parse(fields[1], n, "y")?;
            let z: f64 = parse(fields[2], n, "z")?;
            let w: f64 = if fields.len() == 4 { parse(fields[3], n, "weight")? } else { 1.0 };
            if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                return Err(Error::Parse { line: n, msg: "non-finite coordinate".into() });
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Parse { line: n, msg: format!("weight must be positive, got {w}") });
            }
            points.push(Vec3::new(x, y, z));
            weights.push(w);
        }
        if let Some(prev) = frames.last().map(|f: &ObservationFrame| f.t) {
            if t <= prev {
                return Err(Error::Parse { line: n, msg: format!("timestep {t} does not follow {prev}") });
            }
        }
        frames.push(ObservationFrame { t, points, weights });
    }
    if let Some(Ok((n, s))) = lines.next() {
        return Err(Error::Parse { line: n, msg: format!("trailing content {:?}", s.trim()) });
    }
    Ok(ObservationSequence { frames })
}

fn parse<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse().map_err(|e: T::Err| Error::Parse { line, msg: format!("invalid {what} {:?}: {e}", s.trim()) })
}
