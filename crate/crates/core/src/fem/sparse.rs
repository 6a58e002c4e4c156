//! Compressed sparse row matrices and pattern construction.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major compressed sparse matrix with sorted column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn from_dense(a: &nalgebra::DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                if a[(r, c)] != 0.0 {
                    t.push((r, c, a[(r, c)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                a[(r, self.indices[k])] += self.values[k];
            }
        }
        a
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let s = self.indptr[r];
        let e = self.indptr[r + 1];
        (&self.indices[s..e], &self.values[s..e])
    }

    /// Position of entry `(r, c)` in the value array.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let s = self.indptr[r];
        let e = self.indptr[r + 1];
        self.indices[s..e].binary_search(&c).ok().map(|k| s + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.find(r, c).map_or(0.0, |k| self.values[k])
    }

    /// Add a dense row-major block; every entry must be in the pattern.
    pub fn add_block(&mut self, rows: &[usize], cols: &[usize], block: &[f64]) {
        debug_assert_eq!(block.len(), rows.len() * cols.len());
        for (a, &r) in rows.iter().enumerate() {
            let s = self.indptr[r];
            let e = self.indptr[r + 1];
            let line = &self.indices[s..e];
            for (b, &c) in cols.iter().enumerate() {
                let k = line.binary_search(&c).expect("entry outside sparsity pattern");
                self.values[s + k] += block[a * cols.len() + b];
            }
        }
    }

    /// `y = A x`. Rows are independent, so the parallel loop is deterministic.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let kernel = |(r, yr): (usize, &mut f64)| {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr = s;
        };
        if self.nnz() > 200_000 {
            y.par_iter_mut().enumerate().with_min_len(512).for_each(kernel);
        } else {
            y.iter_mut().enumerate().for_each(kernel);
        }
    }

    /// `y = Aᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.values[k] * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let dst = next[c];
                indices[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, indptr: counts, indices, values }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    /// `‖A − Aᵀ‖_max / ‖A‖_max`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst / scale
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    /// Drop stored entries that are exactly zero.
    pub fn finalize(mut self) -> Self {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut w = 0;
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    self.indices[w] = self.indices[k];
                    self.values[w] = self.values[k];
                    w += 1;
                }
            }
            indptr[r + 1] = w;
        }
        self.indices.truncate(w);
        self.values.truncate(w);
        self.indptr = indptr;
        self
    }

    /// `self + s·other` on the union pattern.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::Mismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(indices.capacity());
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                let a = ca.get(i).copied().unwrap_or(usize::MAX);
                let b = cb.get(j).copied().unwrap_or(usize::MAX);
                if a == b {
                    indices.push(a);
                    values.push(va[i] + s * vb[j]);
                    i += 1;
                    j += 1;
                } else if a < b {
                    indices.push(a);
                    values.push(va[i]);
                    i += 1;
                } else {
                    indices.push(b);
                    values.push(s * vb[j]);
                    j += 1;
                }
            }
            indptr[r + 1] = indices.len();
        }
        Ok(Self { nrows: self.nrows, ncols: self.ncols, indptr, indices, values })
    }

    /// Assemble a block matrix from `(row offset, col offset, block, scale)`.
    pub fn from_blocks(nrows: usize, ncols: usize, blocks: &[(usize, usize, &CsrMatrix, f64)]) -> Self {
        let total: usize = blocks.iter().map(|b| b.2.nnz()).sum();
        let mut t = Vec::with_capacity(total);
        for &(ro, co, m, s) in blocks {
            for r in 0..m.nrows {
                for k in m.indptr[r]..m.indptr[r + 1] {
                    t.push((ro + r, co + m.indices[k], s * m.values[k]));
                }
            }
        }
        Self::from_triplets(nrows, ncols, t)
    }

    /// Convert to faer's column-major sparse format.
    pub fn to_faer(&self) -> faer::sparse::SparseColMat<usize, f64> {
        let t = self.transpose();
        let symbolic = faer::sparse::SymbolicSparseColMat::new_checked(self.nrows, self.ncols, t.indptr, None, t.indices);
        faer::sparse::SparseColMat::new(symbolic, t.values)
    }

    /// Write in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                writeln!(out, "{} {} {:.17e}", r + 1, self.indices[k] + 1, self.values[k])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a + s·b`.
pub fn axpy(s: f64, b: &[f64], a: &mut [f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
}

/// Sparsity pattern accumulated from element dof lists.
///
/// Rows and columns are grouped in entities (nodes) of a fixed block size so
/// that the pattern is built on the node graph and expanded afterwards.
pub struct PatternBuilder {
    row_block: usize,
    col_block: usize,
    ncols: usize,
    adjacency: Vec<Vec<usize>>,
}

impl PatternBuilder {
    pub fn new(row_entities: usize, row_block: usize, col_entities: usize, col_block: usize) -> Self {
        Self {
            row_block,
            col_block,
            ncols: col_entities * col_block,
            adjacency: vec![Vec::new(); row_entities],
        }
    }

    pub fn add(&mut self, rows: &[usize], cols: &[usize]) {
        for &r in rows {
            self.adjacency[r].extend_from_slice(cols);
        }
    }

    /// Zero matrix with the accumulated pattern.
    pub fn build(mut self) -> CsrMatrix {
        for adj in &mut self.adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        let nrows = self.adjacency.len() * self.row_block;
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let nnz: usize = self.adjacency.iter().map(|a| a.len()).sum::<usize>() * self.row_block * self.col_block;
        let mut indices = Vec::with_capacity(nnz);
        for adj in &self.adjacency {
            for _ in 0..self.row_block {
                for &c in adj {
                    for b in 0..self.col_block {
                        indices.push(c * self.col_block + b);
                    }
                }
                indptr.push(indices.len());
            }
        }
        let values = vec![0.0; indices.len()];
        CsrMatrix { nrows, ncols: self.ncols, indptr, indices, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (2, 2, 1.0), (0, 0, 1.0)])
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = sample();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 5);
        assert!(a.is_symmetric(1e-15));
    }

    #[test]
    fn spmv_and_transpose_agree_with_dense() {
        let a = CsrMatrix::from_triplets(2, 3, vec![(0, 2, 1.5), (1, 0, -2.0), (1, 1, 0.5)]);
        let x = [1.0, 2.0, 3.0];
        let d = a.to_dense();
        let y = a.mul_vec(&x);
        let yd = &d * nalgebra::DVector::from_column_slice(&x);
        assert_eq!(y, yd.as_slice());
        let z = a.mul_transpose_vec(&[1.0, -1.0]);
        assert_eq!(a.transpose().mul_vec(&[1.0, -1.0]), z);
    }

    #[test]
    fn finalize_removes_zeros() {
        let mut a = sample();
        a.values[1] = 0.0;
        let a = a.finalize();
        assert_eq!(a.nnz(), 4);
        assert!(a.values.iter().all(|&v| v != 0.0));
    }

    #[test]
    fn add_scaled_union() {
        let a = sample();
        let b = CsrMatrix::from_triplets(3, 3, vec![(0, 2, 1.0), (1, 1, 1.0)]);
        let c = a.add_scaled(2.0, &b).unwrap();
        assert_eq!(c.get(0, 2), 2.0);
        assert_eq!(c.get(1, 1), 4.0);
        assert_eq!(c.get(0, 1), -1.0);
    }

    #[test]
    fn pattern_builder_blocks() {
        let mut p = PatternBuilder::new(2, 3, 2, 3);
        p.add(&[0, 1], &[0, 1]);
        let mut m = p.build();
        assert_eq!(m.nrows, 6);
        assert_eq!(m.nnz(), 36);
        m.add_block(&[0, 4], &[1, 5], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.get(4, 5), 4.0);
    }

    #[test]
    fn matrix_market_round_trip_header() {
        let dir = std::env::temp_dir().join(format!("mm_{}", std::process::id()));
        sample().write_matrix_market(&dir).unwrap();
        let text = std::fs::read_to_string(&dir).unwrap();
        assert!(text.starts_with("%%MatrixMarket"));
        assert!(text.lines().nth(1).unwrap() == "3 3 5");
        std::fs::remove_file(dir).ok();
    }
}
