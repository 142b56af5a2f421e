//! CSV writers for greedy traces and estimate tables.

use std::io::Write;

use super::estimate::{ReducedEstimate, VariateBasis};
use super::model::ParamPoint;
use crate::error::Result;
use crate::scalar::Real;

fn join<I: IntoIterator<Item = String>>(it: I) -> String {
    it.into_iter().collect::<Vec<_>>().join(",")
}

/// One row per sweep: the variance statistics with `iteration` variates and
/// the anchor added afterwards (empty on the final row).
pub fn write_greedy_trace<T: Real, W: Write>(out: &mut W, basis: &VariateBasis<T>, param_names: &[String]) -> Result<()> {
    let mut header = vec!["iteration".to_string()];
    header.extend(param_names.iter().map(|n| format!("anchor_{n}")));
    header.extend(["sigma_I", "sigma_mean", "sigma_min", "tolerance_met"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for r in &basis.greedy_trace {
        let mut row = vec![r.iteration.to_string()];
        match &r.selected {
            Some(p) => row.extend(p.coords().iter().map(|x| x.to_string())),
            None => row.extend(param_names.iter().map(|_| String::new())),
        }
        row.extend([r.sigma, r.sigma_mean, r.sigma_min].map(|x| format!("{x:e}")));
        row.push(r.tolerance_met.to_string());
        writeln!(out, "{}", join(row))?;
    }
    Ok(())
}

pub fn estimates_header(param_names: &[String]) -> String {
    let mut h: Vec<String> = param_names.to_vec();
    h.extend(["mean", "reduced_variance", "halfwidth_95", "bias_halfwidth", "I_used", "M_test"].map(String::from));
    h.join(",")
}

pub fn estimate_row<T: Real>(point: &ParamPoint, est: &ReducedEstimate<T>) -> String {
    let mut row: Vec<String> = point.coords().iter().map(|x| x.to_string()).collect();
    row.extend(
        [est.mean, est.reduced_variance, est.interval.halfwidth, est.bias_halfwidth()]
            .map(|x| format!("{:e}", x.to_f64_lossy())),
    );
    row.push(est.variates_used().to_string());
    row.push(est.interval.num_samples.to_string());
    row.join(",")
}

pub fn write_estimates<T: Real, W: Write>(
    out: &mut W,
    param_names: &[String],
    rows: &[(ParamPoint, ReducedEstimate<T>)],
) -> Result<()> {
    writeln!(out, "{}", estimates_header(param_names))?;
    for (p, e) in rows {
        writeln!(out, "{}", estimate_row(p, e))?;
    }
    Ok(())
}
