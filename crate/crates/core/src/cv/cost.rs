//! Offline/online cost accounting for the control-variate method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    /// Cost of one realization.
    pub c: f64,
    /// Sample size of the plain Monte-Carlo estimate being replaced.
    pub m: f64,
    pub m_test: f64,
    pub m_small: f64,
    pub m_large: f64,
    pub variates: f64,
    pub trial_size: f64,
    pub reuse_small_as_test: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakevenReport {
    /// `M C + M^2`
    pub naive_cost: f64,
    /// `(M_test + M_small)(C + I) + I^2 + M_test^2`
    pub online_cost: f64,
    pub realtime_worthwhile: bool,
    pub greedy_cost: f64,
    /// Queries needed before the greedy cost is paid back.
    pub min_queries: Option<u64>,
    /// Naive cost over the per-query cost including an even share of the
    /// large-sample means.
    pub per_query_gain: f64,
    /// Limit of `per_query_gain` for an unbounded number of queries.
    pub asymptotic_gain: f64,
}

pub fn breakeven_report(k: &CostInputs) -> Result<BreakevenReport> {
    let counts = [k.c, k.m, k.m_test, k.m_small, k.m_large, k.trial_size];
    if counts.iter().any(|&x| !(x > 0.0) || !x.is_finite()) || !(k.variates >= 0.0) {
        return Err(Error::InvalidParameter("cost inputs must be positive".into()));
    }
    let (c, m, mt, ms, ml, i, card) = (k.c, k.m, k.m_test, k.m_small, k.m_large, k.variates, k.trial_size);
    let naive_cost = m * c + m * m;
    let online_cost = (mt + ms) * (c + i) + i * i + mt * mt;
    let greedy_cost = card
        * (i * (mt + ms) * c + i * (i + 1.0) * (2.0 * i + 1.0) / 6.0 + i * (i + 1.0) * ms + mt / 2.0 + i * mt * mt
            + card.ln())
        + i * (ml + ms) * c;
    let min_queries = (naive_cost > online_cost).then(|| (greedy_cost / (naive_cost - online_cost)).ceil() as u64);

    let fit_draws = if i > 0.0 && !k.reuse_small_as_test { ms } else { 0.0 };
    let marginal = (mt + fit_draws) * (c + i) + i * i + mt * mt;
    let per_query_gain = naive_cost / (marginal + i * ml * c / card);
    let asymptotic_gain = naive_cost / marginal;
    Ok(BreakevenReport {
        naive_cost,
        online_cost,
        realtime_worthwhile: naive_cost >= online_cost,
        greedy_cost,
        min_queries,
        per_query_gain,
        asymptotic_gain,
    })
}
