//! Least squares by modified Gram-Schmidt, with rank-revealing column drops.

use super::dense::{dot, DenseMatrix};
use crate::scalar::Real;

/// Thin QR factor of the retained columns of a tall matrix.
#[derive(Debug, Clone)]
pub struct MgsQr<T> {
    /// Orthonormal columns, one per retained input column.
    q: Vec<Vec<T>>,
    /// Upper-triangular factor over the retained columns, row-major `r[i][j]`.
    r: Vec<Vec<T>>,
    kept: Vec<usize>,
    dropped: Vec<usize>,
}

impl<T: Real> MgsQr<T> {
    /// Factors `a` column by column. A column whose remaining norm after
    /// orthogonalization falls below `rel_tol` times the first retained
    /// pivot is dropped (exactly zero columns are always dropped).
    pub fn factor(a: &DenseMatrix<T>, rel_tol: T) -> Self {
        let mut q: Vec<Vec<T>> = Vec::new();
        let mut r: Vec<Vec<T>> = Vec::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        let mut lead: Option<T> = None;
        for j in 0..a.cols() {
            let mut v = a.column(j);
            let mut coeffs = Vec::with_capacity(q.len());
            for qk in &q {
                let c = dot(qk, &v);
                for (vi, &qi) in v.iter_mut().zip(qk) {
                    *vi -= c * qi;
                }
                coeffs.push(c);
            }
            let norm = dot(&v, &v).sqrt();
            let threshold = lead.map_or(T::zero(), |l| rel_tol * l);
            if !(norm > threshold) {
                dropped.push(j);
                continue;
            }
            if lead.is_none() {
                lead = Some(norm);
            }
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            // Column of R for the new retained column.
            for (row, c) in r.iter_mut().zip(&coeffs) {
                row.push(*c);
            }
            let mut new_row = vec![T::zero(); kept.len()];
            new_row.push(norm);
            r.push(new_row);
            q.push(v);
            kept.push(j);
        }
        Self { q, r, kept, dropped }
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn q_columns(&self) -> &[Vec<T>] {
        &self.q
    }

    /// `R^{-1} Q^T b` over retained columns.
    pub fn solve_retained(&self, b: &[T]) -> Vec<T> {
        let k = self.q.len();
        let mut y: Vec<T> = self.q.iter().map(|qk| dot(qk, b)).collect();
        for i in (0..k).rev() {
            let mut s = y[i];
            for j in i + 1..k {
                s -= self.r[i][j] * y[j];
            }
            y[i] = s / self.r[i][i];
        }
        y
    }

    /// Squared residual of the least-squares fit, `b^T b - |Q^T b|^2`,
    /// clamped at zero.
    pub fn residual_ss(&self, b: &[T]) -> T {
        let proj: T = self.q.iter().map(|qk| {
            let c = dot(qk, b);
            c * c
        }).sum();
        (dot(b, b) - proj).max(T::zero())
    }
}
