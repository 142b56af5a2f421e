//! Streaming mean/variance and CLT confidence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special;

/// One-pass (Welford) accumulator of count, mean and centered sum of squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accumulator<T> {
    pub count: u64,
    pub mean: T,
    pub m2: T,
}

impl<T: Real> Default for Accumulator<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Accumulator<T> {
    pub fn new() -> Self {
        Self { count: 0, mean: T::zero(), m2: T::zero() }
    }

    pub fn from_values<I: IntoIterator<Item = T>>(values: I) -> Self {
        let mut acc = Self::new();
        for x in values {
            acc.update(x);
        }
        acc
    }

    pub fn update(&mut self, x: T) {
        self.count += 1;
        let n = T::of(self.count as f64);
        let delta = x - self.mean;
        self.mean += delta / n;
        self.m2 += delta * (x - self.mean);
        if self.m2 < T::zero() {
            self.m2 = T::zero();
        }
    }

    /// Value-returning form of [`Accumulator::update`].
    pub fn updated(mut self, x: T) -> Self {
        self.update(x);
        self
    }

    /// Combines two accumulators (Chan, Golub & LeVeque).
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let na = T::of(self.count as f64);
        let nb = T::of(other.count as f64);
        let n = T::of(count as f64);
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + delta * delta * na * nb / n;
        Self { count, mean, m2 }
    }

    /// Unbiased sample variance, zero below two samples.
    pub fn variance(&self) -> T {
        if self.count < 2 {
            T::zero()
        } else {
            self.m2 / T::of((self.count - 1) as f64)
        }
    }

    pub fn std_dev(&self) -> T {
        self.variance().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval<T> {
    pub center: T,
    pub halfwidth: T,
    pub level: f64,
    pub num_samples: u64,
}

impl<T: Real> ConfidenceInterval<T> {
    pub fn contains(&self, x: T) -> bool {
        (x - self.center).abs() <= self.halfwidth
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("confidence level {level} outside (0, 1)")))
    }
}

/// Asymptotic interval `mean ± a sqrt(V/n)` with `erf(a/sqrt 2) = level`.
pub fn clt_interval<T: Real>(acc: &Accumulator<T>, level: f64) -> Result<ConfidenceInterval<T>> {
    if acc.count < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: acc.count as usize });
    }
    check_level(level)?;
    let a = T::of(special::clt_multiplier(level));
    let n = T::of(acc.count as f64);
    Ok(ConfidenceInterval {
        center: acc.mean,
        halfwidth: a * (acc.variance() / n).sqrt(),
        level,
        num_samples: acc.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use proptest::prelude::*;

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        (mean, ss / (n - 1.0))
    }

    #[test]
    fn small_exact_cases() {
        let acc = Accumulator::from_values([1.0, 2.0, 3.0]);
        assert_eq!(acc.mean, 2.0);
        assert_eq!(acc.variance(), 1.0);
        let constant = Accumulator::from_values([4.25f64; 17]);
        assert_eq!(constant.variance(), 0.0);
        assert_eq!(Accumulator::<f64>::new().updated(1.0).variance(), 0.0);
    }

    #[test]
    fn matches_two_pass_on_uniform_draws() {
        let xs: Vec<f64> =
            (0..1000).map(|m| RandomStream::new(3, m).open01()).collect();
        let acc = Accumulator::from_values(xs.iter().copied());
        let (mean, var) = two_pass(&xs);
        assert!(((acc.mean - mean) / mean).abs() < 1e-12);
        assert!(((acc.variance() - var) / var).abs() < 1e-12);
    }

    #[test]
    fn interval_arithmetic() {
        let acc = Accumulator { count: 100, mean: 2.0, m2: 4.0 * 99.0 };
        let ci = clt_interval(&acc, 0.95).unwrap();
        let a = crate::special::clt_multiplier(0.95);
        assert!((ci.halfwidth - a * 0.2).abs() < 1e-15);
        assert!((ci.halfwidth - 0.392).abs() < 1e-3);
        let flat = Accumulator::from_values([5.0f64; 10]);
        assert_eq!(clt_interval(&flat, 0.95).unwrap().halfwidth, 0.0);
        assert!(matches!(
            clt_interval(&Accumulator::from_values([1.0]), 0.95),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(clt_interval(&acc, 1.0).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let acc = Accumulator::<f32>::from_values([1.0, 2.0, 3.0, 4.0]);
        assert!((acc.variance() - 5.0 / 3.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(
            xs in prop::collection::vec(-1e3f64..1e3, 2..60),
            split in 0usize..60,
        ) {
            let split = split.min(xs.len());
            let seq = Accumulator::from_values(xs.iter().copied());
            let left = Accumulator::from_values(xs[..split].iter().copied());
            let right = Accumulator::from_values(xs[split..].iter().copied());
            let merged = left.merge(&right);
            prop_assert_eq!(merged.count, seq.count);
            let scale = xs.iter().map(|x| x.abs()).fold(1.0, f64::max);
            prop_assert!((merged.mean - seq.mean).abs() <= 1e-12 * scale);
            let tol = 1e-12 * seq.m2.max(scale * scale);
            prop_assert!((merged.m2 - seq.m2).abs() <= tol);
            prop_assert!(merged.m2 >= 0.0);
        }

        #[test]
        fn merge_is_associative(
            a in prop::collection::vec(-10f64..10.0, 0..20),
            b in prop::collection::vec(-10f64..10.0, 0..20),
            c in prop::collection::vec(-10f64..10.0, 1..20),
        ) {
            let (aa, bb, cc) = (
                Accumulator::from_values(a),
                Accumulator::from_values(b),
                Accumulator::from_values(c),
            );
            let l = aa.merge(&bb).merge(&cc);
            let r = aa.merge(&bb.merge(&cc));
            prop_assert!((l.mean - r.mean).abs() <= 1e-12 * (1.0 + l.mean.abs()));
            prop_assert!((l.m2 - r.m2).abs() <= 1e-12 * (1.0 + l.m2));
        }
    }
}
