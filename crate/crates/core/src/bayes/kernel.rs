use crate::error::{Error, Result};

/// Unnormalized kernel density `Σ_m 1{|s - s_m| < α2} exp(-|s - s_m|² / (2 α1²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPdf {
    /// Sample values, sorted.
    samples: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl KernelPdf {
    pub fn new(mut samples: Vec<f64>, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha2 > 0.0) {
            return Err(Error::InvalidParameter(format!("kernel bandwidth {alpha1} and window {alpha2} must be positive")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("non-finite kernel sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, alpha1, alpha2 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Only samples inside the window are visited.
    pub fn eval(&self, s: f64) -> f64 {
        let lo = self.samples.partition_point(|&x| x <= s - self.alpha2);
        let two_a1 = 2.0 * self.alpha1 * self.alpha1;
        self.samples[lo..]
            .iter()
            .take_while(|&&x| x < s + self.alpha2)
            .filter(|&&x| (s - x).abs() < self.alpha2)
            .map(|&x| (-(s - x) * (s - x) / two_a1).exp())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, RandomStream};

    #[test]
    fn single_sample_and_outside_window() {
        let k = KernelPdf::new(vec![0.7], 0.5, 0.01).unwrap();
        assert_eq!(k.eval(0.7), 1.0);
        assert_eq!(k.eval(0.72), 0.0);
        assert!(KernelPdf::new(vec![0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn profile_matches_brute_force() {
        let st = RandomStream::new(3, 0);
        let raw: Vec<f64> = (0..10_000).map(|i| 0.1 * standard_normal(&st.at(i))).collect();
        let k = KernelPdf::new(raw.clone(), 0.5, 0.01).unwrap();
        for i in 0..200 {
            let s = -0.3 + 0.003 * i as f64;
            let brute: f64 = raw
                .iter()
                .filter(|&&x| (s - x).abs() < 0.01)
                .map(|&x| (-(s - x).powi(2) / (2.0 * 0.25)).exp())
                .sum();
            assert!((k.eval(s) - brute).abs() <= 1e-12 * brute.max(1.0));
        }
    }
}
