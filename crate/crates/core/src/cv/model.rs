use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Stream index where the independent large-sample realizations start.
/// Indices below this are reserved for the small/test samples.
pub const LARGE_SAMPLE_OFFSET: u64 = 1 << 40;

/// A point in parameter space indexing one member of a random-variable family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint(pub Vec<f64>);

impl ParamPoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Self(coords.into())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for ParamPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Axis-aligned parameter box with coordinate names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamDomain {
    pub fn new(names: &[&str], lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(names.len(), lower.len());
        assert_eq!(names.len(), upper.len());
        Self { names: names.iter().map(|s| s.to_string()).collect(), lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn check(&self, p: &ParamPoint) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter has {} coordinates, domain has {}",
                p.dim(),
                self.dim()
            )));
        }
        for (k, &x) in p.coords().iter().enumerate() {
            if !(x >= self.lower[k] && x <= self.upper[k]) {
                return Err(Error::InvalidParameter(format!(
                    "{} = {x} outside [{}, {}]",
                    self.names[k], self.lower[k], self.upper[k]
                )));
            }
        }
        Ok(())
    }
}

/// A family of scalar random variables `Z(point)` that can be sampled by index.
///
/// `realize(point, m)` must be a deterministic function of `(point, m)` and
/// the model's seed, and must draw from random stream `m` only. Evaluating two
/// points at the same `m` therefore uses common random numbers, which is what
/// makes the variates of one point useful controls for another.
pub trait ParametrizedModel<T: Real>: Sync {
    fn domain(&self) -> ParamDomain;

    fn realize(&self, point: &ParamPoint, index: u64) -> Result<T>;

    /// Realizations for a contiguous index range.
    fn realize_range(&self, point: &ParamPoint, indices: std::ops::Range<u64>) -> Result<Vec<T>> {
        indices.map(|m| self.realize(point, m)).collect()
    }
}

impl<T: Real, M: ParametrizedModel<T> + ?Sized> ParametrizedModel<T> for &M {
    fn domain(&self) -> ParamDomain {
        (**self).domain()
    }

    fn realize(&self, point: &ParamPoint, index: u64) -> Result<T> {
        (**self).realize(point, index)
    }

    fn realize_range(&self, point: &ParamPoint, indices: std::ops::Range<u64>) -> Result<Vec<T>> {
        (**self).realize_range(point, indices)
    }
}

/// Cartesian grid of points, first coordinate varying slowest.
pub fn cartesian_grid(axes: &[Vec<f64>]) -> Vec<ParamPoint> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &x in axis {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        points = next;
    }
    points.into_iter().map(ParamPoint).collect()
}

/// `n` equispaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ordering() {
        let g = cartesian_grid(&[vec![1.0, 2.0], vec![10.0, 20.0, 30.0]]);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0].coords(), &[1.0, 10.0]);
        assert_eq!(g[1].coords(), &[1.0, 20.0]);
        assert_eq!(g[5].coords(), &[2.0, 30.0]);
    }

    #[test]
    fn domain_check() {
        let d = ParamDomain::new(&["a"], vec![0.0], vec![1.0]);
        assert!(d.check(&ParamPoint::new([0.5])).is_ok());
        assert!(d.check(&ParamPoint::new([1.5])).is_err());
        assert!(d.check(&ParamPoint::new([0.5, 0.1])).is_err());
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }
}
