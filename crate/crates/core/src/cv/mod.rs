//! Reduced basis of control variates for families of expectations.

pub mod cost;
pub mod diagnostics;
pub mod estimate;
pub mod export;
pub mod fit;
pub mod greedy;
pub mod model;

pub use cost::{breakeven_report, BreakevenReport, CostInputs};
pub use diagnostics::{decay_diagnostics, DecayDiagnostics};
pub use estimate::{
    batch_estimate, estimate_with_coefficients, ratio_estimate, reduced_estimate, ControlVariate, EstimateConfig,
    GreedyRecord, RatioEstimate, ReducedEstimate, VariateBasis,
};
pub use fit::{fit_coefficients, FitMethod, FitResult};
pub use greedy::{weak_greedy, GreedyConfig, Tolerance};
pub use model::{cartesian_grid, linspace, ParamDomain, ParamPoint, ParametrizedModel, LARGE_SAMPLE_OFFSET};
