use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed relative increase between consecutive trace entries.
pub const MONOTONE_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayDiagnostics {
    pub monotone: bool,
    /// Least-squares slope of `ln sigma_I` against `I`; `None` with fewer
    /// than two positive entries.
    pub fitted_rate: Option<f64>,
}

pub fn decay_diagnostics(sigmas: &[f64]) -> Result<DecayDiagnostics> {
    if sigmas.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: sigmas.len() });
    }
    let monotone = sigmas.windows(2).all(|w| w[1] <= (1.0 + MONOTONE_SLACK) * w[0]);
    let pts: Vec<(f64, f64)> = sigmas
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0 && s.is_finite())
        .map(|(i, &s)| (i as f64, s.ln()))
        .collect();
    let fitted_rate = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(DecayDiagnostics { monotone, fitted_rate })
}
