use std::sync::atomic::{AtomicU64, Ordering};

use super::space::RBSpace;
use crate::cv::{ParamDomain, ParamPoint, ParametrizedModel};
use crate::error::{Error, Result};
use crate::fem::{AffineOperator, FinParams};
use crate::kl::KLBasis;
use crate::rng::{derive_seed, RandomStream};
use crate::scalar::Real;

/// Seed tag of the KL coefficient streams.
pub const KL_TAG: u64 = 0x6b6c;

/// Admissible `(k2, Ē)` box.
pub fn fin_domain() -> ParamDomain {
    ParamDomain::new(&["k2", "Ebar"], vec![0.1, 0.1], vec![10.0, 1.0])
}

/// Shared description of the random Biot field.
#[derive(Debug, Clone, Copy)]
pub struct FieldSampler<'a> {
    pub kl: &'a KLBasis,
    pub num_modes: usize,
    pub upsilon: f64,
    pub seed: u64,
}

impl FieldSampler<'_> {
    /// Parameters of realization `m` at `(k2, Ē)`. The field draw does not
    /// depend on `(k2, Ē)`, so every point sees the same realization `m`.
    pub fn params(&self, k2: f64, biot_mean: f64, m: u64) -> Result<FinParams> {
        let z = self.draw_z(m)?;
        Ok(FinParams { k1: 1.0, k2, biot_mean, y: self.kl.field_coordinates(&z, self.upsilon) })
    }

    /// Admissible KL coordinates `Z` of realization `m`.
    pub fn draw_z(&self, m: u64) -> Result<Vec<f64>> {
        let stream = RandomStream::new(derive_seed(self.seed, KL_TAG), m);
        Ok(self.kl.sample_biot(self.num_modes, 1.0, self.upsilon, &stream)?.z)
    }

    fn point_params(&self, point: &ParamPoint, m: u64) -> Result<FinParams> {
        fin_domain().check(point)?;
        self.params(point.coords()[0], point.coords()[1], m)
    }
}

/// Compliance `s(k2, Ē; ω_m)` through the reduced-basis surrogate, with the
/// error bound of every online solve tracked.
pub struct ThermalFinModel<'a, T> {
    pub space: &'a RBSpace<T>,
    pub field: FieldSampler<'a>,
    pub certify: bool,
    max_delta: AtomicU64,
}

impl<'a, T: Real> ThermalFinModel<'a, T> {
    pub fn new(space: &'a RBSpace<T>, field: FieldSampler<'a>) -> Result<Self> {
        if field.num_modes != space.num_modes() {
            return Err(Error::DimensionMismatch(format!(
                "reduced space built for {} modes, field uses {}",
                space.num_modes(),
                field.num_modes
            )));
        }
        Ok(Self { space, field, certify: true, max_delta: AtomicU64::new(0) })
    }

    /// Largest `Δ_N` seen so far.
    pub fn max_error_bound(&self) -> f64 {
        f64::from_bits(self.max_delta.load(Ordering::Relaxed))
    }
}

impl<T: Real> ParametrizedModel<T> for ThermalFinModel<'_, T> {
    fn domain(&self) -> ParamDomain {
        fin_domain()
    }

    fn realize(&self, point: &ParamPoint, index: u64) -> Result<T> {
        let p = self.field.point_params(point, index)?;
        let sol = self.space.online_solve(&p)?;
        if self.certify {
            let d = sol.delta.to_f64_lossy();
            if !d.is_finite() {
                return Err(Error::Numerical(format!("error bound {d} at {p:?}")));
            }
            // Non-negative floats order like their bit patterns.
            self.max_delta.fetch_max(d.to_bits(), Ordering::Relaxed);
        }
        Ok(sol.s)
    }
}

/// Same quantity from full finite-element solves, for validation.
pub struct FullFinModel<'a, T> {
    pub op: &'a AffineOperator<T>,
    pub field: FieldSampler<'a>,
}

impl<T: Real> ParametrizedModel<T> for FullFinModel<'_, T> {
    fn domain(&self) -> ParamDomain {
        fin_domain()
    }

    fn realize(&self, point: &ParamPoint, index: u64) -> Result<T> {
        let p = self.field.point_params(point, index)?;
        let u = self.op.solve_full(&p)?;
        Ok(self.op.outputs(&u).0)
    }
}
