//! Reduced-basis control variates for Monte-Carlo estimation of parametrized
//! expectations, with a thermal-fin benchmark and Bayesian MMSE models.
//!
//! The numerical code is generic over the scalar type; the aliases below fix
//! it to `f64`.

pub mod bayes;
pub mod cv;
pub mod error;
pub mod fem;
pub mod kl;
pub mod linalg;
pub mod rb;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Basis = cv::VariateBasis<f64>;
pub type Estimate = cv::ReducedEstimate<f64>;
pub type Operator = fem::AffineOperator<f64>;
pub type ReducedSpace = rb::RBSpace<f64>;
pub type Variate = cv::ControlVariate<f64>;
