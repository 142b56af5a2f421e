use serde::{Deserialize, Serialize};

use crate::cv::{ParamDomain, ParamPoint, ParametrizedModel};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, standard_normal, RandomStream};
use crate::scalar::Real;
use crate::stats::{clt_interval, Accumulator, ConfidenceInterval};

/// Seed tags of the observation noise and posterior draws.
pub const OBS_TAG: u64 = 0x6f62_73;
pub const POSTERIOR_TAG: u64 = 0x706f_7374;

/// Posterior mean and variance of `θ` for prior `N(μ, σ²)` and observations
/// `s_j ~ N(θ, λ²)`.
pub fn analytic_mmse(mu: f64, sigma2: f64, lambda: f64, obs: &[f64]) -> Result<(f64, f64)> {
    if obs.is_empty() {
        return Err(Error::InvalidConfiguration("empty observation set".into()));
    }
    if !(sigma2 > 0.0 && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("prior variance {sigma2} and noise level {lambda} must be positive")));
    }
    let j = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / j;
    let noise = lambda * lambda / j;
    let w = sigma2 / (sigma2 + noise);
    Ok((w * mean + (1.0 - w) * mu, sigma2 * noise / (sigma2 + noise)))
}

/// Where observation sets are generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ObservationLevel {
    /// `s_j ~ N(θ0, λ0²)` with a fixed `λ0`.
    Fixed(f64),
    /// `λ0 = λ`, the noise level being queried.
    Matched,
}

/// Conjugate Gaussian model; parameters are `(μ, σ, λ, set)` where `set`
/// indexes one of the stored observation sets.
///
/// Observations are `θ0 + λ0 ε_{set,j}` with standard normal `ε` drawn once,
/// so matched sets at different `λ` share their noise.
#[derive(Debug, Clone)]
pub struct GaussianToyModel {
    pub theta0: f64,
    pub level: ObservationLevel,
    noise: Vec<Vec<f64>>,
    seed: u64,
}

impl GaussianToyModel {
    pub fn new(theta0: f64, level: ObservationLevel, num_sets: usize, j: usize, seed: u64) -> Result<Self> {
        if num_sets == 0 || j == 0 {
            return Err(Error::InvalidConfiguration(format!("need at least one observation set and J >= 1 (got {num_sets} sets, J = {j})")));
        }
        let base = derive_seed(seed, OBS_TAG);
        let noise = (0..num_sets as u64)
            .map(|s| (0..j as u64).map(|k| standard_normal(&RandomStream::new(base, s).at(k))).collect())
            .collect();
        Ok(Self { theta0, level, noise, seed })
    }

    pub fn num_sets(&self) -> usize {
        self.noise.len()
    }

    pub fn observations(&self, set: usize, lambda: f64) -> Vec<f64> {
        let l0 = match self.level {
            ObservationLevel::Fixed(l) => l,
            ObservationLevel::Matched => lambda,
        };
        self.noise[set].iter().map(|e| self.theta0 + l0 * e).collect()
    }

    pub fn param_domain(&self) -> ParamDomain {
        ParamDomain::new(
            &["mu", "sigma", "lambda", "obs_set"],
            vec![f64::MIN, f64::MIN_POSITIVE, f64::MIN_POSITIVE, 0.0],
            vec![f64::MAX, f64::MAX, f64::MAX, (self.num_sets() - 1) as f64],
        )
    }

    fn unpack(&self, point: &ParamPoint) -> Result<(f64, f64, f64, usize)> {
        self.param_domain().check(point)?;
        let c = point.coords();
        let set = c[3];
        if set.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!("observation set index {set} is not an integer")));
        }
        Ok((c[0], c[1], c[2], set as usize))
    }

    /// Posterior mean and variance at `point`.
    pub fn posterior(&self, point: &ParamPoint) -> Result<(f64, f64)> {
        let (mu, sigma, lambda, set) = self.unpack(point)?;
        analytic_mmse(mu, sigma * sigma, lambda, &self.observations(set, lambda))
    }

    /// Plain Monte-Carlo MMSE over realizations `0..m`.
    pub fn mc_mmse(&self, point: &ParamPoint, m: u64, level: f64) -> Result<ConfidenceInterval<f64>> {
        if m < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: m as usize });
        }
        let (mean, var) = self.posterior(point)?;
        let sd = var.sqrt();
        let base = derive_seed(self.seed, POSTERIOR_TAG);
        let acc = Accumulator::from_values((0..m).map(|k| mean + sd * standard_normal(&RandomStream::new(base, k))));
        clt_interval(&acc, level)
    }
}

impl<T: Real> ParametrizedModel<T> for GaussianToyModel {
    fn domain(&self) -> ParamDomain {
        self.param_domain()
    }

    /// One draw from the posterior at `point`.
    fn realize(&self, point: &ParamPoint, index: u64) -> Result<T> {
        let (mean, var) = self.posterior(point)?;
        let z = standard_normal(&RandomStream::new(derive_seed(self.seed, POSTERIOR_TAG), index));
        Ok(T::of(mean + var.sqrt() * z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        let obs = vec![0.9; 10];
        let (m, v) = analytic_mmse(0.9, 0.16, 0.5, &obs).unwrap();
        assert!((m - 0.9).abs() < 1e-15);
        assert!((v - 0.16 * 0.025 / 0.185).abs() < 1e-15);
        let obs = [1.0, 2.0, 4.0];
        let (m, _) = analytic_mmse(-5.0, 1e12, 0.3, &obs).unwrap();
        assert!((m - 7.0 / 3.0).abs() < 1e-9);
        assert!(analytic_mmse(0.0, 1.0, 1.0, &[]).is_err());
    }

    #[test]
    fn mc_matches_analytic_and_is_deterministic() {
        let model = GaussianToyModel::new(1.0, ObservationLevel::Fixed(0.5), 3, 10, 4).unwrap();
        let p = ParamPoint::new(vec![0.9, 0.4, 0.5, 1.0]);
        let ci = model.mc_mmse(&p, 20_000, 0.95).unwrap();
        let (m, _) = model.posterior(&p).unwrap();
        assert!((ci.center - m).abs() <= 3.0 * ci.halfwidth);
        assert_eq!(model.mc_mmse(&p, 20_000, 0.95).unwrap(), ci);
        let a: f64 = model.realize(&p, 7).unwrap();
        let b: f64 = model.realize(&p, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vanishing_noise_gives_sample_mean() {
        let model = GaussianToyModel::new(1.0, ObservationLevel::Matched, 1, 10, 2).unwrap();
        let p = ParamPoint::new(vec![0.9, 0.4, 1e-8, 0.0]);
        let obs = model.observations(0, 1e-8);
        let mean = obs.iter().sum::<f64>() / 10.0;
        let ci = model.mc_mmse(&p, 100, 0.95).unwrap();
        assert!((ci.center - mean).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_points() {
        let model = GaussianToyModel::new(1.0, ObservationLevel::Matched, 2, 3, 2).unwrap();
        assert!(ParametrizedModel::<f64>::realize(&model, &ParamPoint::new(vec![0.9, 0.4, 0.5, 0.5]), 0).is_err());
        assert!(ParametrizedModel::<f64>::realize(&model, &ParamPoint::new(vec![0.9, 0.4, 0.5, 2.0]), 0).is_err());
        assert!(ParametrizedModel::<f64>::realize(&model, &ParamPoint::new(vec![0.9, 0.0, 0.5, 0.0]), 0).is_err());
        assert!(GaussianToyModel::new(1.0, ObservationLevel::Matched, 0, 3, 2).is_err());
    }

    proptest! {
        #[test]
        fn shrinkage_between_prior_and_sample_mean(
            mu in -2.0..2.0f64, s2 in 1e-3..4.0f64, l in 1e-2..2.0f64,
            obs in proptest::collection::vec(-3.0..3.0f64, 1..20),
        ) {
            let (m, _) = analytic_mmse(mu, s2, l, &obs).unwrap();
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            prop_assert!(m >= mu.min(mean) - 1e-12 && m <= mu.max(mean) + 1e-12);
        }

        #[test]
        fn more_observations_never_widen_posterior(s2 in 1e-3..4.0f64, l in 1e-2..2.0f64, j in 1usize..50) {
            let (_, v1) = analytic_mmse(0.0, s2, l, &vec![0.0; j]).unwrap();
            let (_, v2) = analytic_mmse(0.0, s2, l, &vec![0.0; 2 * j]).unwrap();
            prop_assert!(v2 <= v1);
        }
    }
}
