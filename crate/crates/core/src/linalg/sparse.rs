//! Compressed sparse rows and a profile (skyline) Cholesky solver.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square CSR sparsity pattern with sorted column indices per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern containing the diagonal plus every `(i, j)` and `(j, i)` pair.
    pub fn symmetric_from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for (i, j) in pairs {
            rows[i].insert(j);
            rows[j].insert(i);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows {
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Storage slot of entry `(i, j)`, if structurally present.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

/// CSR matrix over a shared pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pattern: Arc<SparsityPattern>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_values(pattern: Arc<SparsityPattern>, values: Vec<T>) -> Self {
        assert_eq!(values.len(), pattern.nnz());
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Adds `v` at `(i, j)`; panics if the entry is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let s = self
            .pattern
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        self.values[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern.slot(i, j).map_or(T::zero(), |s| self.values[s])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        let mut y = vec![T::zero(); n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.pattern.row_range(i) {
                s += self.values[k] * x[self.pattern.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let mut total = T::zero();
        for (i, &xi) in x.iter().enumerate() {
            let mut s = T::zero();
            for k in self.pattern.row_range(i) {
                s += self.values[k] * y[self.pattern.col_idx[k]];
            }
            total += xi * s;
        }
        total
    }

    /// `sum_q coeffs[q] * mats[q]`; all inputs must share one pattern.
    pub fn linear_combination(coeffs: &[T], mats: &[&CsrMatrix<T>]) -> Self {
        assert_eq!(coeffs.len(), mats.len());
        assert!(!mats.is_empty());
        let pattern = mats[0].pattern.clone();
        let mut values = vec![T::zero(); pattern.nnz()];
        for (&c, m) in coeffs.iter().zip(mats) {
            assert!(Arc::ptr_eq(&m.pattern, &pattern) || *m.pattern == *pattern);
            if c == T::zero() {
                continue;
            }
            for (v, &mv) in values.iter_mut().zip(&m.values) {
                *v += c * mv;
            }
        }
        Self { pattern, values }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.dim();
        let mut d = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for k in self.pattern.row_range(i) {
                d[(i, self.pattern.col_idx[k])] = self.values[k];
            }
        }
        d
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.dim())
            .map(|i| self.pattern.row_range(i).map(|k| self.values[k]).sum())
            .collect()
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim() {
            for k in self.pattern.row_range(i) {
                let j = self.pattern.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Cholesky factor stored by rows over each row's envelope
/// `first[i] ..= i`. Fill-in stays inside the envelope, so the cost is
/// governed by the node numbering's bandwidth.
#[derive(Debug, Clone)]
pub struct SkylineCholesky<T> {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> SkylineCholesky<T> {
    /// Factors the lower triangle of a symmetric positive definite matrix.
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let pat = a.pattern();
        let first: Vec<usize> = (0..n).map(|i| pat.row(i).first().copied().unwrap_or(i).min(i)).collect();
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![T::zero(); offset[n]];
        for i in 0..n {
            for k in pat.row_range(i) {
                let j = pat.col_idx[k];
                if j <= i {
                    data[offset[i] + (j - first[i])] = a.values[k];
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let start = fi.max(fj);
                let mut s = data[offset[i] + (j - fi)];
                let ri = offset[i] - fi;
                let rj = offset[j] - fj;
                for k in start..j {
                    s -= data[ri + k] * data[rj + k];
                }
                if j < i {
                    data[ri + j] = s / data[offset[j] + (j - fj)];
                } else {
                    if !(s > T::zero()) {
                        return Err(Error::Numerical(format!(
                            "sparse matrix not positive definite at row {i} (pivot {s:e})"
                        )));
                    }
                    data[ri + i] = s.sqrt();
                }
            }
        }
        Ok(Self { first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.offset[i] - fi;
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[ri + k] * y[k];
            }
            y[i] = s / self.data[ri + i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.offset[i] - fi;
            y[i] /= self.data[ri + i];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.data[ri + k] * yi;
            }
        }
        y
    }
}
