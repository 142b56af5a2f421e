//! Bayesian MMSE estimation: a conjugate toy model and a PDE posterior, both
//! usable as parametrized models for control variates.

pub mod kernel;
pub mod pde;
pub mod toy;

pub use kernel::KernelPdf;
pub use pde::{
    read_observations, synthetic_observations, write_observations, ForwardMap, FullForward, KlScaling, PdePosterior,
    PosteriorPart, PosteriorSummary, RBForward, RatioPart, WeightedDraw, PRIOR_TAG, WEIGHT_FLOOR,
};
pub use toy::{analytic_mmse, GaussianToyModel, ObservationLevel, OBS_TAG, POSTERIOR_TAG};
