use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimate::{reduced_estimate, ControlVariate, EstimateConfig, GreedyRecord, VariateBasis};
use super::model::{ParamPoint, ParametrizedModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    Absolute(f64),
    /// Fraction of the uncontrolled maximum variance.
    Relative(f64),
}

impl Tolerance {
    pub fn threshold(&self, sigma0: f64) -> f64 {
        match *self {
            Tolerance::Absolute(t) => t,
            Tolerance::Relative(r) => r * sigma0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub tolerance: Tolerance,
    pub max_variates: usize,
    pub m_large: u64,
    pub estimate: EstimateConfig,
}

/// Builds a control-variate basis by repeatedly adding the trial point whose
/// reduced variance is largest.
///
/// Ties go to the smallest trial index. When `max_variates` is exhausted the
/// basis is returned with `tolerance_met = false`.
pub fn weak_greedy<T: Real, M: ParametrizedModel<T> + ?Sized>(
    model: &M,
    trial: &[ParamPoint],
    cfg: &GreedyConfig,
) -> Result<VariateBasis<T>> {
    if trial.is_empty() {
        return Err(Error::InvalidConfiguration("empty trial set".into()));
    }
    if cfg.max_variates == 0 {
        return Err(Error::InvalidConfiguration("I_max must be at least 1".into()));
    }
    cfg.estimate.validate()?;
    let domain = model.domain();
    for p in trial {
        domain.check(p)?;
    }
    let n_cached = cfg.estimate.cache_len();
    let mut basis = VariateBasis::empty();
    let mut is_anchor = vec![false; trial.len()];
    let mut threshold = None;
    loop {
        let variances: Vec<f64> = trial
            .par_iter()
            .map(|p| reduced_estimate(model, &basis, p, &cfg.estimate).map(|e| e.reduced_variance.to_f64_lossy()))
            .collect::<Result<_>>()?;
        if let Some(bad) = variances.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite reduced variance at trial point {bad}")));
        }
        let sigma = variances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sigma_min = variances.iter().copied().fold(f64::INFINITY, f64::min);
        let sigma_mean = variances.iter().sum::<f64>() / variances.len() as f64;
        let tol = *threshold.get_or_insert_with(|| cfg.tolerance.threshold(sigma));
        let mut argmax = None;
        for (i, &v) in variances.iter().enumerate() {
            if !is_anchor[i] && argmax.map_or(true, |j: usize| v > variances[j]) {
                argmax = Some(i);
            }
        }
        let met = sigma <= tol;
        let iteration = basis.len();
        let stop = met || iteration >= cfg.max_variates || argmax.is_none();
        let selected = if stop { None } else { argmax.map(|i| trial[i].clone()) };
        basis.greedy_trace.push(GreedyRecord {
            iteration,
            sigma,
            sigma_mean,
            sigma_min,
            argmax: argmax.unwrap_or(0),
            selected: selected.clone(),
            tolerance_met: met,
        });
        if stop {
            basis.tolerance_met = met;
            return Ok(basis);
        }
        let i = argmax.expect("checked above");
        is_anchor[i] = true;
        basis.variates.push(ControlVariate::build(model, trial[i].clone(), cfg.m_large, n_cached)?);
    }
}
