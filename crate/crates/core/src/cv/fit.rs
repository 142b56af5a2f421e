//! Least-squares fit of control-variate coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix, MgsQr};
use crate::scalar::Real;

/// Relative pivot threshold below which a variate column is treated as
/// linearly dependent on the preceding ones.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Modified Gram-Schmidt QR of the realization matrix.
    #[default]
    Qr,
    /// Cholesky solve of the sample covariance system.
    NormalEq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    /// One coefficient per input column; dropped columns get zero.
    pub coefficients: Vec<T>,
    /// Indices of columns removed for rank deficiency.
    pub dropped: Vec<usize>,
    /// Empirical variance of the fitted residual (divisor `M - 1`).
    pub residual_variance: T,
}

fn centered<T: Real>(values: &[T]) -> Vec<T> {
    let n = T::of_usize(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    values.iter().map(|&v| v - mean).collect()
}

/// Fits `alpha` minimizing the empirical variance of
/// `target - sum_i alpha_i * variates[:, i]`.
///
/// Target and columns are centered by their sample means, so the objective
/// is the sample variance of the controlled variable and the result does not
/// depend on how the variates were centered upstream. A column whose pivot
/// falls below [`RANK_TOL`] times the leading pivot is dropped and reported.
pub fn fit_coefficients<T: Real>(
    target: &[T],
    variates: &DenseMatrix<T>,
    method: FitMethod,
) -> Result<FitResult<T>> {
    let m = target.len();
    let cols = variates.cols();
    if variates.rows() != m {
        return Err(Error::DimensionMismatch(format!(
            "target has {m} samples, variate matrix has {} rows",
            variates.rows()
        )));
    }
    if cols == 0 {
        return Err(Error::InvalidConfiguration("fit requires at least one variate".into()));
    }
    if cols > m {
        return Err(Error::InvalidConfiguration(format!(
            "{cols} variates but only {m} samples for the coefficient fit"
        )));
    }
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let t = centered(target);
    let centered_cols: Vec<Vec<T>> =
        (0..cols).map(|j| centered(&variates.column(j))).collect();
    let y = DenseMatrix::from_columns(&centered_cols);
    let denom = T::of_usize(m - 1);

    let (kept, dropped, kept_coeffs, residual_ss) = match method {
        FitMethod::Qr => {
            let qr = MgsQr::factor(&y, T::of(RANK_TOL));
            let alpha = qr.solve_retained(&t);
            let ss = qr.residual_ss(&t);
            (qr.kept().to_vec(), qr.dropped().to_vec(), alpha, ss)
        }
        FitMethod::NormalEq => {
            let (kept, dropped, alpha) = normal_equations(&centered_cols, &t, denom)?;
            let mut r = t.clone();
            for (&j, &a) in kept.iter().zip(&alpha) {
                for (ri, &yi) in r.iter_mut().zip(&centered_cols[j]) {
                    *ri -= a * yi;
                }
            }
            let ss = dot(&r, &r);
            (kept, dropped, alpha, ss)
        }
    };
    let mut coefficients = vec![T::zero(); cols];
    for (&j, &a) in kept.iter().zip(&kept_coeffs) {
        coefficients[j] = a;
    }
    Ok(FitResult { coefficients, dropped, residual_variance: residual_ss / denom })
}

/// Covariance system `C alpha = c` solved by a Cholesky factorization that
/// skips columns whose pivot is below `RANK_TOL` times the leading pivot.
fn normal_equations<T: Real>(
    cols: &[Vec<T>],
    t: &[T],
    denom: T,
) -> Result<(Vec<usize>, Vec<usize>, Vec<T>)> {
    let n = cols.len();
    let mut cov = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = dot(&cols[i], &cols[j]) / denom;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let rhs: Vec<T> = cols.iter().map(|c| dot(c, t) / denom).collect();

    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    // Rows of L restricted to kept columns: l[a][b] for kept positions a >= b.
    let mut l: Vec<Vec<T>> = Vec::new();
    let mut lead: Option<T> = None;
    for j in 0..n {
        let mut row = Vec::with_capacity(kept.len() + 1);
        for (b, &kb) in kept.iter().enumerate() {
            let mut s = cov[(j, kb)];
            for c in 0..b {
                s -= row[c] * l[b][c];
            }
            row.push(s / l[b][b]);
        }
        let pivot = cov[(j, j)] - row.iter().map(|&x| x * x).sum::<T>();
        let threshold = lead.map_or(T::zero(), |d| T::of(RANK_TOL) * d);
        if !(pivot > threshold) {
            dropped.push(j);
            continue;
        }
        if lead.is_none() {
            lead = Some(pivot);
        }
        row.push(pivot.sqrt());
        l.push(row);
        kept.push(j);
    }
    let k = kept.len();
    let mut z: Vec<T> = kept.iter().map(|&j| rhs[j]).collect();
    for a in 0..k {
        let mut s = z[a];
        for b in 0..a {
            s -= l[a][b] * z[b];
        }
        z[a] = s / l[a][a];
    }
    for a in (0..k).rev() {
        let mut s = z[a];
        for b in a + 1..k {
            s -= l[b][a] * z[b];
        }
        z[a] = s / l[a][a];
    }
    Ok((kept, dropped, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use proptest::prelude::*;

    fn residual_ss(target: &[f64], cols: &DenseMatrix<f64>, alpha: &[f64]) -> f64 {
        let r: Vec<f64> = (0..target.len())
            .map(|m| target[m] - (0..alpha.len()).map(|i| alpha[i] * cols[(m, i)]).sum::<f64>())
            .collect();
        let c = centered(&r);
        c.iter().map(|x| x * x).sum()
    }

    fn random_system(seed: u64, m: usize, n: usize) -> (Vec<f64>, DenseMatrix<f64>) {
        let mut cols = Vec::new();
        for j in 0..n {
            cols.push(
                (0..m)
                    .map(|i| RandomStream::new(seed, i as u64).at(j as u64).next_uniform_pm_sqrt3())
                    .collect::<Vec<_>>(),
            );
        }
        let target = (0..m)
            .map(|i| {
                let noise = RandomStream::new(seed, i as u64).at(99).next_uniform_pm_sqrt3();
                cols.iter().enumerate().map(|(j, c)| (j as f64 + 1.0) * c[i]).sum::<f64>() + 0.3 * noise
            })
            .collect();
        (target, DenseMatrix::from_columns(&cols))
    }

    /// Direct dense normal-equation oracle: forms (Y^T Y) and solves it by
    /// Gaussian elimination with partial pivoting.
    fn dense_oracle(target: &[f64], cols: &DenseMatrix<f64>) -> Vec<f64> {
        let n = cols.cols();
        let yc: Vec<Vec<f64>> = (0..n).map(|j| centered(&cols.column(j))).collect();
        let t = centered(target);
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = yc[i].iter().zip(&yc[j]).map(|(x, y)| x * y).sum();
            }
            a[i][n] = yc[i].iter().zip(&t).map(|(x, y)| x * y).sum();
        }
        for p in 0..n {
            let piv = (p..n).max_by(|&x, &y| a[x][p].abs().total_cmp(&a[y][p].abs())).unwrap();
            a.swap(p, piv);
            for r in p + 1..n {
                let f = a[r][p] / a[p][p];
                for c in p..=n {
                    a[r][c] -= f * a[p][c];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
            x[r] = (a[r][n] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn identical_variate_gives_unit_coefficient() {
        let z: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let cols = DenseMatrix::from_columns(&[z.clone()]);
        for method in [FitMethod::Qr, FitMethod::NormalEq] {
            let fit = fit_coefficients(&z, &cols, method).unwrap();
            assert!((fit.coefficients[0] - 1.0).abs() < 1e-14);
            assert!(fit.residual_variance < 1e-28);
        }
    }

    #[test]
    fn uncorrelated_variate_gives_zero() {
        let target = vec![1.0f64, -1.0, 1.0, -1.0];
        let cols = DenseMatrix::from_columns(&[vec![1.0, 1.0, -1.0, -1.0]]);
        let fit = fit_coefficients(&target, &cols, FitMethod::Qr).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-15);
    }

    #[test]
    fn qr_and_normal_equations_agree_on_random_system() {
        let (target, cols) = random_system(11, 20, 3);
        let qr = fit_coefficients(&target, &cols, FitMethod::Qr).unwrap();
        let ne = fit_coefficients(&target, &cols, FitMethod::NormalEq).unwrap();
        let oracle = dense_oracle(&target, &cols);
        for i in 0..3 {
            assert!((qr.coefficients[i] - ne.coefficients[i]).abs() < 1e-8);
            assert!((qr.coefficients[i] - oracle[i]).abs() < 1e-8);
        }
        assert!((qr.residual_variance - ne.residual_variance).abs() < 1e-10);
    }

    #[test]
    fn invalid_shapes() {
        let cols = DenseMatrix::from_columns(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![3.0, 1.0]]);
        assert!(matches!(
            fit_coefficients(&[1.0, 2.0], &cols, FitMethod::Qr),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn dependent_column_is_dropped_without_changing_residual() {
        let (target, cols) = random_system(5, 15, 2);
        let base = fit_coefficients(&target, &cols, FitMethod::Qr).unwrap();
        let combo: Vec<f64> = (0..15).map(|i| 2.0 * cols[(i, 0)] - 0.5 * cols[(i, 1)]).collect();
        let extended = DenseMatrix::from_columns(&[cols.column(0), cols.column(1), combo]);
        for method in [FitMethod::Qr, FitMethod::NormalEq] {
            let fit = fit_coefficients(&target, &extended, method).unwrap();
            assert_eq!(fit.dropped, vec![2]);
            assert_eq!(fit.coefficients[2], 0.0);
            assert!((fit.residual_variance - base.residual_variance).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn fitted_coefficients_are_a_local_minimum(seed in 0u64..500, n in 1usize..4) {
            let (target, cols) = random_system(seed, 12, n);
            let fit = fit_coefficients(&target, &cols, FitMethod::Qr).unwrap();
            let best = residual_ss(&target, &cols, &fit.coefficients);
            for i in 0..n {
                for delta in [-1e-3, 1e-3] {
                    let mut a = fit.coefficients.clone();
                    a[i] += delta;
                    prop_assert!(residual_ss(&target, &cols, &a) >= best - 1e-12);
                }
            }
        }
    }
}
