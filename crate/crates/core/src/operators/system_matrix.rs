use std::io::{BufRead, Write};

use super::ray_rows;
use crate::conditioning::DenseMatrix;
use crate::error::{ensure, Error, Result};
use crate::exec;
use crate::geometry::ScanGeometry;

/// Default cap on `M * N` for explicit matrices.
pub const DEFAULT_MATRIX_BUDGET: usize = 40_000_000;

/// Sparse matrix of ray/pixel intersection lengths in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SystemMatrix {
    /// Explicit system matrix of `geom`, refusing when `M * N` exceeds `budget`.
    pub fn build(geom: &ScanGeometry, budget: usize) -> Result<Self> {
        let dense = geom.m().saturating_mul(geom.num_pixels());
        if dense > budget {
            return Err(Error::ResourceLimit(format!(
                "system matrix {} x {} = {dense} entries exceeds the budget of {budget}",
                geom.m(),
                geom.num_pixels()
            )));
        }
        Ok(Self::build_sparse(geom))
    }

    /// Build without the dense-size budget; memory scales with the nonzeros only.
    pub(crate) fn build_sparse(geom: &ScanGeometry) -> Self {
        let n_bins = geom.n_bins();
        let per_view = exec::map_indexed(geom.n_views(), |v| ray_rows(geom, v));
        let mut row_ptr = Vec::with_capacity(geom.m() + 1);
        row_ptr.push(0);
        let nnz: usize = per_view.iter().map(|(c, _, _)| c.len()).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (cols, vals, ends) in per_view {
            debug_assert_eq!(ends.len(), n_bins);
            let base = col_idx.len();
            col_idx.extend_from_slice(&cols);
            values.extend_from_slice(&vals);
            row_ptr.extend(ends.iter().map(|e| base + e));
        }
        Self { n_rows: geom.m(), n_cols: geom.num_pixels(), row_ptr, col_idx, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().zip(&self.values[span]).map(|(&c, &v)| (c as usize, v))
    }

    /// All `(row, col, value)` entries in row order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `y = M x`, each row summed in stored order.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "operand length");
        let mut y = vec![0.0; self.n_rows];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(y.len(), self.n_rows);
        exec::fill_indexed(y, |r| {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut acc = 0.0;
            for (&c, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                acc += v * x[c as usize];
            }
            acc
        });
    }

    /// `y = M^T x` by sequential scatter; use [`SystemMatrix::transpose`] for repeated use.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows, "operand length");
        let mut y = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            let xr = x[r];
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> SystemMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                col_idx[slot] = r as u32;
                values[slot] = v;
                next[c] += 1;
            }
        }
        SystemMatrix { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx, values }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            m.set(r, c, m.get(r, c) + v);
        }
        m
    }

    /// Text triplet export: `rows cols nnz` header, then `row col value` lines
    /// with 17 significant digits.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:.16e}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`SystemMatrix::write_triplets`]; entries must be in row order.
    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("empty triplet file"))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::invalid(format!("bad triplet header {header:?}"))))
            .collect::<Result<_>>()?;
        ensure!(dims.len() == 3, "triplet header needs `rows cols nnz`");
        let (n_rows, n_cols, nnz) = (dims[0], dims[1], dims[2]);
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut last_row = 0;
        for line in lines {
            let line = line?;
            let mut it = line.split_whitespace();
            let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(Error::invalid(format!("bad triplet line {line:?}")));
            };
            let bad = || Error::invalid(format!("bad triplet line {line:?}"));
            let r: usize = r.parse().map_err(|_| bad())?;
            let c: usize = c.parse().map_err(|_| bad())?;
            let v: f64 = v.parse().map_err(|_| bad())?;
            ensure!(r < n_rows && c < n_cols && r >= last_row, "triplet out of range or order: {line:?}");
            last_row = r;
            row_ptr[r + 1] += 1;
            col_idx.push(c as u32);
            values.push(v);
        }
        ensure!(values.len() == nnz, "header promises {nnz} entries, found {}", values.len());
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values })
    }
}
