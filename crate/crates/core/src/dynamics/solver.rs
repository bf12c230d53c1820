use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::BlockedSparseMatrix;
use crate::math::{Mat3, Vec3};

/// Conjugate-gradient settings. `max_iter_factor · n` caps the iterations for an `n`-DOF system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iter_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iter_factor: 10 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Solves `A x = b` by block-Jacobi preconditioned conjugate gradients until
/// `‖b − Ax‖ ≤ tol · ‖b‖`.
pub fn solve_linear(a: &BlockedSparseMatrix, b: &[Vec3], tol: f64, max_iter: usize) -> Result<Vec<Vec3>> {
    solve_linear_from(a, b, None, tol, max_iter).map(|(x, _)| x)
}

/// As [`solve_linear`] with an optional initial guess.
pub fn solve_linear_from(
    a: &BlockedSparseMatrix,
    b: &[Vec3],
    guess: Option<&[Vec3]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<Vec3>, SolveStats)> {
    let n = a.block_dim();
    if b.len() != n {
        return Err(Error::Dimension { expected: n, got: b.len() });
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![Vec3::zeros(); n], SolveStats::default()));
    }
    let precond: Vec<Mat3> = a
        .diag_blocks()
        .iter()
        .map(|d| {
            d.try_inverse()
                .unwrap_or_else(|| Mat3::identity() / d.trace().abs().max(f64::MIN_POSITIVE))
        })
        .collect();
    let mut x = match guess {
        Some(g) if g.len() == n => g.to_vec(),
        _ => vec![Vec3::zeros(); n],
    };
    let mut r: Vec<Vec3> = if guess.is_some() {
        let ax = a.mul_vec(&x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    } else {
        b.to_vec()
    };
    let mut z: Vec<Vec3> = precond.iter().zip(&r).map(|(p, ri)| p * ri).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![Vec3::zeros(); n];
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(Error::NonConvergence { iterations: it, residual: res });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonConvergence { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
            z[i] = precond[i] * r[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + p[i] * beta;
        }
        res = dot(&r, &r).sqrt() / b_norm;
        it += 1;
    }
    Ok((x, SolveStats { iterations: it, relative_residual: res }))
}
