use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Square block-CSR matrix with dense 3x3 blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockedSparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<Mat3>,
}

impl BlockedSparseMatrix {
    /// Zero matrix with the given `(row, col)` block pattern. Duplicates are merged.
    pub fn with_pattern(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in entries {
            assert!(i < n && j < n, "block ({i}, {j}) outside {n}x{n}");
            rows[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        let blocks = vec![Mat3::zeros(); cols.len()];
        Self { n, row_ptr, cols, blocks }
    }

    /// Block-diagonal matrix.
    pub fn diagonal(diag: &[Mat3]) -> Self {
        let mut m = Self::with_pattern(diag.len(), (0..diag.len()).map(|i| (i, i)));
        m.blocks.copy_from_slice(diag);
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![Mat3::identity(); n])
    }

    /// Number of block rows.
    pub fn block_dim(&self) -> usize {
        self.n
    }

    /// Scalar dimension `3n`.
    pub fn dim(&self) -> usize {
        3 * self.n
    }

    pub fn nnz_blocks(&self) -> usize {
        self.cols.len()
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.cols == other.cols
    }

    /// Storage slot of block `(i, j)`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        r.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&Mat3> {
        self.position(i, j).map(|p| &self.blocks[p])
    }

    pub fn block_at(&self, slot: usize) -> &Mat3 {
        &self.blocks[slot]
    }

    pub fn block_at_mut(&mut self, slot: usize) -> &mut Mat3 {
        &mut self.blocks[slot]
    }

    /// Adds `b` to block `(i, j)`; the block must be in the pattern.
    pub fn add_block(&mut self, i: usize, j: usize, b: &Mat3) {
        let p = self.position(i, j).unwrap_or_else(|| panic!("block ({i}, {j}) not in pattern"));
        self.blocks[p] += b;
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &Mat3)> {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(&self.blocks[range])
    }

    pub fn diag_blocks(&self) -> Vec<Mat3> {
        (0..self.n).map(|i| self.block(i, i).copied().unwrap_or_else(Mat3::zeros)).collect()
    }

    pub fn set_zero(&mut self) {
        self.blocks.iter_mut().for_each(|b| *b = Mat3::zeros());
    }

    pub fn scale(&mut self, s: f64) {
        self.blocks.iter_mut().for_each(|b| *b *= s);
    }

    /// `self += alpha * other`; `other`'s pattern must be contained in `self`'s.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()> {
        if other.n != self.n {
            return Err(Error::Dimension { expected: self.n, got: other.n });
        }
        if self.same_pattern(other) {
            for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
                *a += b * alpha;
            }
            return Ok(());
        }
        for i in 0..other.n {
            for (j, b) in other.row(i) {
                let p = self
                    .position(i, j)
                    .ok_or_else(|| Error::Domain(format!("block ({i}, {j}) missing from target pattern")))?;
                self.blocks[p] += b * alpha;
            }
        }
        Ok(())
    }

    /// `alpha*a + beta*b` on the union pattern.
    pub fn linear_combination(alpha: f64, a: &Self, beta: f64, b: &Self) -> Result<Self> {
        if a.n != b.n {
            return Err(Error::Dimension { expected: a.n, got: b.n });
        }
        let contains = |outer: &Self, inner: &Self| {
            (0..inner.n).all(|i| inner.row(i).all(|(j, _)| outer.position(i, j).is_some()))
        };
        let mut out = if contains(a, b) {
            a.zeros_like()
        } else if contains(b, a) {
            b.zeros_like()
        } else {
            let entries = (0..a.n).flat_map(|i| a.row(i).map(move |(j, _)| (i, j)));
            let entries_b = (0..b.n).flat_map(|i| b.row(i).map(move |(j, _)| (i, j)));
            Self::with_pattern(a.n, entries.chain(entries_b).collect::<Vec<_>>())
        };
        out.add_scaled(alpha, a)?;
        out.add_scaled(beta, b)?;
        Ok(out)
    }

    pub fn zeros_like(&self) -> Self {
        Self { n: self.n, row_ptr: self.row_ptr.clone(), cols: self.cols.clone(), blocks: vec![Mat3::zeros(); self.cols.len()] }
    }

    pub fn mul_vec(&self, x: &[Vec3]) -> Vec<Vec3> {
        let mut y = vec![Vec3::zeros(); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[Vec3], y: &mut [Vec3]) {
        assert_eq!(x.len(), self.n);
        let row = |(i, yi): (usize, &mut Vec3)| {
            let mut acc = Vec3::zeros();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.blocks[p] * x[self.cols[p]];
            }
            *yi = acc;
        };
        if self.n >= 4096 {
            y.par_iter_mut().enumerate().for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }

    /// `aᵀ A b` for block vectors.
    pub fn bilinear(&self, a: &[Vec3], b: &[Vec3]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let mut acc = Vec3::zeros();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.blocks[p] * b[self.cols[p]];
            }
            s += a[i].dot(&acc);
        }
        s
    }

    /// Frobenius inner product `vec(A)·vec(B)`; patterns may differ.
    pub fn frobenius_dot(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for (j, b) in self.row(i) {
                if let Some(o) = other.block(i, j) {
                    s += b.component_mul(o).sum();
                }
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Infinity norm of the scalar matrix.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| {
                (0..3).map(move |r| self.row(i).map(|(_, b)| (0..3).map(|c| b[(r, c)].abs()).sum::<f64>()).sum::<f64>())
            })
            .fold(0.0, f64::max)
    }

    /// `‖A − Aᵀ‖_∞` on the scalar matrix.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let mut rows = [0.0; 3];
            for (j, b) in self.row(i) {
                let t = self.block(j, i).map(|m| m.transpose()).unwrap_or_else(Mat3::zeros);
                let d = b - t;
                for r in 0..3 {
                    rows[r] += (0..3).map(|c| d[(r, c)].abs()).sum::<f64>();
                }
            }
            worst = worst.max(rows.into_iter().fold(0.0, f64::max));
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(3 * self.n, 3 * self.n);
        for i in 0..self.n {
            for (j, b) in self.row(i) {
                d.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(b);
            }
        }
        d
    }

    /// Writes nonzero scalar entries as `row col value` lines (zero-based), preceded by `rows cols nnz`.
    pub fn write_triplets(&self, mut w: impl Write) -> Result<()> {
        let mut entries = Vec::new();
        for i in 0..self.n {
            for (j, b) in self.row(i) {
                for r in 0..3 {
                    for c in 0..3 {
                        if b[(r, c)] != 0.0 {
                            entries.push((3 * i + r, 3 * j + c, b[(r, c)]));
                        }
                    }
                }
            }
        }
        writeln!(w, "{} {} {}", self.dim(), self.dim(), entries.len())?;
        for (r, c, v) in entries {
            writeln!(w, "{r} {c} {v:.17e}")?;
        }
        Ok(())
    }
}

/// Flattens block vectors to scalars.
pub fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|x| [x[0], x[1], x[2]]).collect()
}

pub fn unflatten(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub fn block_dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}
