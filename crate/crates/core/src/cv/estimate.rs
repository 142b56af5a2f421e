use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_coefficients, FitMethod};
use super::model::{ParamPoint, ParametrizedModel, LARGE_SAMPLE_OFFSET};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::special;
use crate::stats::{check_level, clt_interval, Accumulator, ConfidenceInterval};

/// One selected control variate: its anchor, a high-accuracy mean and cached
/// realizations at indices `0..stored_realizations.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVariate<T> {
    pub anchor: ParamPoint,
    pub mean_estimate: T,
    pub mean_variance: T,
    pub m_large: u64,
    pub stored_realizations: Vec<T>,
}

impl<T: Real> ControlVariate<T> {
    /// Estimates the anchor mean from `m_large` realizations drawn from the
    /// independent large-sample index range and caches realizations `0..n_cached`.
    pub fn build<M: ParametrizedModel<T> + ?Sized>(
        model: &M,
        anchor: ParamPoint,
        m_large: u64,
        n_cached: u64,
    ) -> Result<Self> {
        if m_large < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: m_large as usize });
        }
        let large: Vec<T> = (0..m_large)
            .into_par_iter()
            .map(|m| model.realize(&anchor, LARGE_SAMPLE_OFFSET + m))
            .collect::<Result<_>>()?;
        let acc = Accumulator::from_values(large);
        let stored_realizations = (0..n_cached)
            .into_par_iter()
            .map(|m| model.realize(&anchor, m))
            .collect::<Result<_>>()?;
        Ok(Self { anchor, mean_estimate: acc.mean, mean_variance: acc.variance(), m_large, stored_realizations })
    }

    /// Realization `index`, from the cache when available.
    pub fn realization<M: ParametrizedModel<T> + ?Sized>(&self, model: &M, index: u64) -> Result<T> {
        match self.stored_realizations.get(index as usize) {
            Some(&v) => Ok(v),
            None => model.realize(&self.anchor, index),
        }
    }
}

/// Per-iteration record of the weak greedy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRecord {
    /// Number of variates in use when the sweep ran.
    pub iteration: usize,
    /// Largest reduced variance over the trial set.
    pub sigma: f64,
    pub sigma_mean: f64,
    pub sigma_min: f64,
    /// Trial index attaining `sigma` among non-anchors.
    pub argmax: usize,
    /// Anchor appended after this sweep, if any.
    pub selected: Option<ParamPoint>,
    pub tolerance_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariateBasis<T> {
    pub variates: Vec<ControlVariate<T>>,
    pub greedy_trace: Vec<GreedyRecord>,
    pub tolerance_met: bool,
}

impl<T: Real> Default for VariateBasis<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Real> VariateBasis<T> {
    pub fn empty() -> Self {
        Self { variates: Vec::new(), greedy_trace: Vec::new(), tolerance_met: false }
    }

    pub fn len(&self) -> usize {
        self.variates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variates.is_empty()
    }

    pub fn anchors(&self) -> Vec<&ParamPoint> {
        self.variates.iter().map(|v| &v.anchor).collect()
    }

    /// The first `n` variates, without the trace.
    pub fn truncated(&self, n: usize) -> Self {
        Self { variates: self.variates[..n.min(self.len())].to_vec(), greedy_trace: Vec::new(), tolerance_met: false }
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.greedy_trace.iter().map(|r| r.sigma).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub m_small: u64,
    pub m_test: u64,
    /// Use the fitting sample as the test sample instead of fresh draws.
    pub reuse_small_as_test: bool,
    pub method: FitMethod,
    pub level: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { m_small: 10, m_test: 10, reuse_small_as_test: false, method: FitMethod::Qr, level: 0.95 }
    }
}

impl EstimateConfig {
    /// Index range of the test sample.
    pub fn test_indices(&self) -> std::ops::Range<u64> {
        if self.reuse_small_as_test {
            0..self.m_test
        } else {
            self.m_small..self.m_small + self.m_test
        }
    }

    /// Highest realization index touched, plus one.
    pub fn cache_len(&self) -> u64 {
        self.m_small.max(self.test_indices().end)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_test < 2 {
            return Err(Error::InvalidConfiguration(format!("M_test = {} must be at least 2", self.m_test)));
        }
        check_level(self.level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedEstimate<T> {
    pub mean: T,
    pub reduced_variance: T,
    pub coefficients: Vec<T>,
    pub dropped: Vec<usize>,
    pub interval: ConfidenceInterval<T>,
    pub bias_halfwidths: Vec<T>,
    /// Controlled test-sample values `Z_m - sum_i alpha_i Z^i_m`.
    pub residuals: Vec<T>,
}

impl<T: Real> ReducedEstimate<T> {
    pub fn variates_used(&self) -> usize {
        self.coefficients.len()
    }

    pub fn bias_halfwidth(&self) -> T {
        self.bias_halfwidths.iter().copied().sum()
    }

    /// CLT halfwidth plus the bias terms of the large-sample means.
    pub fn total_halfwidth(&self) -> T {
        self.interval.halfwidth + self.bias_halfwidth()
    }
}

/// Control-variate estimate of `E Z(point)`.
///
/// Coefficients are fitted on realizations `0..m_small`; mean and variance
/// come from the test sample. With an empty basis this is plain Monte Carlo
/// over the test indices.
pub fn reduced_estimate<T: Real, M: ParametrizedModel<T> + ?Sized>(
    model: &M,
    basis: &VariateBasis<T>,
    point: &ParamPoint,
    cfg: &EstimateConfig,
) -> Result<ReducedEstimate<T>> {
    cfg.validate()?;
    let n = basis.len();
    let coefficients: Vec<T>;
    let dropped: Vec<usize>;
    if n == 0 {
        coefficients = Vec::new();
        dropped = Vec::new();
    } else {
        if (cfg.m_small as usize) < n {
            return Err(Error::InvalidConfiguration(format!(
                "{n} variates but only M_small = {} realizations for the fit",
                cfg.m_small
            )));
        }
        let target = model.realize_range(point, 0..cfg.m_small)?;
        let cols = basis
            .variates
            .iter()
            .map(|v| (0..cfg.m_small).map(|m| v.realization(model, m)).collect::<Result<Vec<T>>>())
            .collect::<Result<Vec<_>>>()?;
        let fit = fit_coefficients(&target, &DenseMatrix::from_columns(&cols), cfg.method)?;
        coefficients = fit.coefficients;
        dropped = fit.dropped;
    }
    let with_coefficients = ReducedEstimate {
        mean: T::zero(),
        reduced_variance: T::zero(),
        coefficients,
        dropped,
        interval: ConfidenceInterval { center: T::zero(), halfwidth: T::zero(), level: cfg.level, num_samples: 0 },
        bias_halfwidths: Vec::new(),
        residuals: Vec::new(),
    };
    evaluate_with_coefficients(model, basis, point, cfg, with_coefficients)
}

/// Estimate with externally supplied coefficients (no fit).
pub fn estimate_with_coefficients<T: Real, M: ParametrizedModel<T> + ?Sized>(
    model: &M,
    basis: &VariateBasis<T>,
    point: &ParamPoint,
    coefficients: Vec<T>,
    cfg: &EstimateConfig,
) -> Result<ReducedEstimate<T>> {
    cfg.validate()?;
    if coefficients.len() != basis.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} variates",
            coefficients.len(),
            basis.len()
        )));
    }
    let est = ReducedEstimate {
        mean: T::zero(),
        reduced_variance: T::zero(),
        coefficients,
        dropped: Vec::new(),
        interval: ConfidenceInterval { center: T::zero(), halfwidth: T::zero(), level: cfg.level, num_samples: 0 },
        bias_halfwidths: Vec::new(),
        residuals: Vec::new(),
    };
    evaluate_with_coefficients(model, basis, point, cfg, est)
}

fn evaluate_with_coefficients<T: Real, M: ParametrizedModel<T> + ?Sized>(
    model: &M,
    basis: &VariateBasis<T>,
    point: &ParamPoint,
    cfg: &EstimateConfig,
    mut est: ReducedEstimate<T>,
) -> Result<ReducedEstimate<T>> {
    let test = cfg.test_indices();
    let mut residuals = model.realize_range(point, test.clone())?;
    for (v, &a) in basis.variates.iter().zip(&est.coefficients) {
        if a == T::zero() {
            continue;
        }
        for (r, m) in residuals.iter_mut().zip(test.clone()) {
            *r -= a * v.realization(model, m)?;
        }
    }
    let acc = Accumulator::from_values(residuals.iter().copied());
    let mut interval = clt_interval(&acc, cfg.level)?;
    let mut mean = acc.mean;
    for (v, &a) in basis.variates.iter().zip(&est.coefficients) {
        mean += a * v.mean_estimate;
    }
    interval.center = mean;
    let a = T::of(special::clt_multiplier(cfg.level));
    est.bias_halfwidths = basis
        .variates
        .iter()
        .zip(&est.coefficients)
        .map(|(v, &c)| c.abs() * a * (v.mean_variance / T::of(v.m_large as f64)).sqrt())
        .collect();
    est.mean = mean;
    est.reduced_variance = acc.variance();
    est.interval = interval;
    est.residuals = residuals;
    Ok(est)
}

/// Reduced estimates for many points, in input order.
pub fn batch_estimate<T: Real, M: ParametrizedModel<T> + ?Sized>(
    model: &M,
    basis: &VariateBasis<T>,
    points: &[ParamPoint],
    cfg: &EstimateConfig,
) -> Result<Vec<ReducedEstimate<T>>> {
    points.par_iter().map(|p| reduced_estimate(model, basis, p, cfg)).collect()
}

/// Ratio of two reduced estimates sharing test indices, with a delta-method
/// halfwidth from the covariance of their residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate<T> {
    pub value: T,
    pub halfwidth: T,
    pub bias_halfwidth: T,
}

pub fn ratio_estimate<T: Real>(
    num: &ReducedEstimate<T>,
    den: &ReducedEstimate<T>,
) -> Result<RatioEstimate<T>> {
    let n = num.residuals.len();
    if n != den.residuals.len() || n < 2 {
        return Err(Error::DimensionMismatch("ratio needs matching residual samples".into()));
    }
    if den.mean == T::zero() {
        return Err(Error::Numerical("ratio with zero denominator".into()));
    }
    let r = num.mean / den.mean;
    let nn = T::of_usize(n);
    let mn = num.residuals.iter().copied().sum::<T>() / nn;
    let md = den.residuals.iter().copied().sum::<T>() / nn;
    let mut var = T::zero();
    for (&x, &y) in num.residuals.iter().zip(&den.residuals) {
        let d = (x - mn) - r * (y - md);
        var += d * d;
    }
    var /= T::of_usize(n - 1);
    let a = T::of(special::clt_multiplier(num.interval.level));
    let halfwidth = a * (var / nn).sqrt() / den.mean.abs();
    let bias_halfwidth = (num.bias_halfwidth() + r.abs() * den.bias_halfwidth()) / den.mean.abs();
    Ok(RatioEstimate { value: r, halfwidth, bias_halfwidth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv::model::ParamDomain;
    use crate::rng::RandomStream;

    /// Z(l) = l * W with W uniform on (-sqrt 3, sqrt 3).
    struct Scaled;
    impl ParametrizedModel<f64> for Scaled {
        fn domain(&self) -> ParamDomain {
            ParamDomain::new(&["l"], vec![0.0], vec![10.0])
        }
        fn realize(&self, p: &ParamPoint, m: u64) -> Result<f64> {
            Ok(p.0[0] * (1.0 + RandomStream::new(7, m).next_uniform_pm_sqrt3()))
        }
    }

    #[test]
    fn empty_basis_is_plain_monte_carlo() {
        let cfg = EstimateConfig { m_small: 5, m_test: 50, ..Default::default() };
        let p = ParamPoint::new([2.0]);
        let est = reduced_estimate(&Scaled, &VariateBasis::empty(), &p, &cfg).unwrap();
        let acc = Accumulator::from_values((5..55).map(|m| Scaled.realize(&p, m).unwrap()));
        assert_eq!(est.mean.to_bits(), acc.mean.to_bits());
        assert_eq!(est.reduced_variance.to_bits(), acc.variance().to_bits());
        assert_eq!(est.total_halfwidth(), est.interval.halfwidth);
    }

    #[test]
    fn scaled_family_fits_exact_ratio() {
        let cfg = EstimateConfig { m_small: 20, m_test: 20, ..Default::default() };
        let anchor = ControlVariate::build(&Scaled, ParamPoint::new([1.5]), 1000, 20).unwrap();
        let basis = VariateBasis { variates: vec![anchor], ..VariateBasis::empty() };
        for l in [0.3, 2.0, 7.0] {
            let est = reduced_estimate(&Scaled, &basis, &ParamPoint::new([l]), &cfg).unwrap();
            assert!((est.coefficients[0] - l / 1.5).abs() < 1e-10);
            assert!(est.reduced_variance <= 1e-20);
            assert!(est.total_halfwidth() >= est.interval.halfwidth);
        }
    }

    #[test]
    fn forced_unit_coefficient_returns_anchor_mean() {
        let cfg = EstimateConfig { m_small: 10, m_test: 10, ..Default::default() };
        let p = ParamPoint::new([3.0]);
        let anchor = ControlVariate::build(&Scaled, p.clone(), 500, 10).unwrap();
        let basis = VariateBasis { variates: vec![anchor.clone()], ..VariateBasis::empty() };
        let est = estimate_with_coefficients(&Scaled, &basis, &p, vec![1.0], &cfg).unwrap();
        assert_eq!(est.mean, anchor.mean_estimate);
        assert_eq!(est.reduced_variance, 0.0);
    }

    #[test]
    fn too_many_variates_is_a_configuration_error() {
        let cfg = EstimateConfig { m_small: 1, m_test: 10, ..Default::default() };
        let v: Vec<_> = [1.0, 2.0]
            .iter()
            .map(|&l| ControlVariate::build(&Scaled, ParamPoint::new([l]), 10, 1).unwrap())
            .collect();
        let basis = VariateBasis { variates: v, ..VariateBasis::empty() };
        assert!(matches!(
            reduced_estimate(&Scaled, &basis, &ParamPoint::new([1.0]), &cfg),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn ratio_of_proportional_estimates() {
        let cfg = EstimateConfig { m_small: 5, m_test: 40, ..Default::default() };
        let b = VariateBasis::empty();
        let num = reduced_estimate(&Scaled, &b, &ParamPoint::new([4.0]), &cfg).unwrap();
        let den = reduced_estimate(&Scaled, &b, &ParamPoint::new([2.0]), &cfg).unwrap();
        let r = ratio_estimate(&num, &den).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        assert!(r.halfwidth < 1e-12);
    }
}
