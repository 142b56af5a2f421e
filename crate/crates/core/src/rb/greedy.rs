use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::space::{RBBuilder, RBSpace, XInnerProduct};
use crate::error::{Error, Result};
use crate::fem::{AffineOperator, FinParams};
use crate::kl::KLBasis;
use crate::rng::{derive_seed, RandomStream};
use crate::scalar::Real;

/// What the greedy compares against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMeasure {
    /// `Δ_N(μ)`.
    #[default]
    Absolute,
    /// `Δ_N(μ) / ||u_N(μ)||_X`.
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RBGreedyRecord {
    /// Basis dimension at which the sweep was made.
    pub n: usize,
    pub max_error: f64,
    pub argmax: usize,
}

#[derive(Debug, Clone)]
pub struct RBGreedyResult<T> {
    pub space: RBSpace<T>,
    pub trace: Vec<RBGreedyRecord>,
    pub discarded: Vec<usize>,
    pub tolerance_met: bool,
}

/// Builds a reduced basis by repeatedly adding the snapshot at the worst
/// certified point of `trial`.
pub fn rb_greedy<T: Real>(
    op: &AffineOperator<T>,
    x: &XInnerProduct<T>,
    trial: &[FinParams],
    tol: f64,
    n_max: usize,
    measure: ErrorMeasure,
) -> Result<RBGreedyResult<T>> {
    if trial.is_empty() {
        return Err(Error::InvalidConfiguration("empty RB training set".into()));
    }
    if n_max == 0 {
        return Err(Error::InvalidConfiguration("N_max must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfiguration(format!("RB tolerance {tol} must be positive")));
    }
    for p in trial {
        op.check_coercive(p)?;
    }
    let mut builder = RBBuilder::new(op, x);
    let mut excluded = vec![false; trial.len()];
    let mut discarded = Vec::new();
    let mut trace = Vec::new();
    loop {
        let space = builder.space();
        let n = space.dim();
        let errors: Vec<f64> = trial
            .par_iter()
            .map(|p| {
                let sol = space.online_solve(p)?;
                let delta = sol.delta.to_f64_lossy();
                Ok(match measure {
                    ErrorMeasure::Relative if n > 0 => {
                        let norm = sol.norm_x().to_f64_lossy();
                        if norm > 0.0 { delta / norm } else { f64::INFINITY }
                    }
                    _ => delta,
                })
            })
            .collect::<Result<_>>()?;
        if let Some(e) = errors.iter().find(|e| e.is_nan()) {
            return Err(Error::Numerical(format!("error bound {e} at N = {n}")));
        }
        let max_error = errors.iter().copied().fold(0.0, f64::max);
        let candidate = errors
            .iter()
            .enumerate()
            .filter(|(i, _)| !excluded[*i])
            .fold(None, |best: Option<(usize, f64)>, (i, &e)| match best {
                Some((_, b)) if b >= e => best,
                _ => Some((i, e)),
            });
        let argmax = candidate.map_or(0, |c| c.0);
        trace.push(RBGreedyRecord { n, max_error, argmax });
        let relative_undefined = measure == ErrorMeasure::Relative && n == 0;
        if max_error <= tol && !relative_undefined {
            return Ok(RBGreedyResult { space: builder.into_space(), trace, discarded, tolerance_met: true });
        }
        if n >= n_max || candidate.is_none() {
            return Ok(RBGreedyResult { space: builder.into_space(), trace, discarded, tolerance_met: false });
        }
        // Retry at the next worst point until the basis actually grows.
        let mut order: Vec<usize> = (0..trial.len()).filter(|&i| !excluded[i]).collect();
        order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
        let mut grown = false;
        for i in order {
            excluded[i] = true;
            if builder.add_snapshot(&trial[i])? {
                grown = true;
                break;
            }
            discarded.push(i);
        }
        if !grown {
            return Ok(RBGreedyResult { space: builder.into_space(), trace, discarded, tolerance_met: false });
        }
    }
}

/// Training set over `(k2, Ē)` and KL coordinates.
///
/// The full product of `{-√3, +√3}` over all KL directions is out of reach,
/// so each grid point is paired with the nominal field plus a rotating
/// subset of a fixed list of sign patterns over the leading directions:
/// one-factor-at-a-time rows and random corners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingDesign {
    pub k2: Vec<f64>,
    pub biot_mean: Vec<f64>,
    /// Leading KL directions that vary; the remaining ones stay at zero.
    pub varied_directions: usize,
    pub random_corners: usize,
    /// Field patterns attached to each grid point besides the nominal one.
    pub rows_per_point: usize,
}

impl TrainingDesign {
    /// Sign patterns `z ∈ {-√3, 0, √3}^K` kept only when the field stays
    /// above half its mean at every node.
    pub fn field_rows(&self, kl: &KLBasis, k: usize, upsilon: f64, seed: u64) -> Vec<Vec<f64>> {
        let s3 = 3f64.sqrt();
        let mut rows = Vec::new();
        let varied = self.varied_directions.min(k);
        for j in 0..varied {
            for sign in [s3, -s3] {
                let mut z = vec![0.0; k];
                z[j] = sign;
                rows.push(z);
            }
        }
        let stream = RandomStream::new(derive_seed(seed, TRAINING_TAG), 0);
        for c in 0..self.random_corners as u64 {
            let mut z = vec![0.0; k];
            for (j, zj) in z.iter_mut().enumerate().take(varied) {
                *zj = if stream.at(c * varied as u64 + j as u64).bits() & 1 == 0 { s3 } else { -s3 };
            }
            rows.push(z);
        }
        rows.retain(|z| {
            let y = kl.field_coordinates(z, upsilon);
            kl.field(&y, 1.0).iter().all(|&b| b >= 0.5)
        });
        rows
    }

    pub fn build(&self, kl: &KLBasis, k: usize, upsilon: f64, seed: u64) -> Result<Vec<FinParams>> {
        if self.k2.is_empty() || self.biot_mean.is_empty() {
            return Err(Error::InvalidConfiguration("training grid axes must be nonempty".into()));
        }
        let rows = self.field_rows(kl, k, upsilon, seed);
        let per = self.rows_per_point.min(rows.len());
        let mut out = Vec::new();
        let mut point = 0usize;
        for &k2 in &self.k2 {
            for &e in &self.biot_mean {
                out.push(FinParams { k1: 1.0, k2, biot_mean: e, y: vec![0.0; k] });
                for j in 0..per {
                    let z = &rows[(point * per + j) % rows.len()];
                    out.push(FinParams { k1: 1.0, k2, biot_mean: e, y: kl.field_coordinates(z, upsilon) });
                }
                point += 1;
            }
        }
        Ok(out)
    }
}

/// Seed tag for the training-design stream.
pub const TRAINING_TAG: u64 = 0x7261_696e;
