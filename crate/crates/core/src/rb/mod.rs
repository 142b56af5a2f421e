//! Certified reduced-basis surrogate of the thermal fin.

pub mod greedy;
pub mod io;
pub mod model;
pub mod space;

pub use greedy::{rb_greedy, ErrorMeasure, RBGreedyRecord, RBGreedyResult, TrainingDesign, TRAINING_TAG};
pub use io::{read_space, write_space};
pub use model::{fin_domain, FieldSampler, FullFinModel, ThermalFinModel, KL_TAG};
pub use space::{direct_residual_norm, RBBuilder, RBSolution, RBSpace, XInnerProduct, DISCARD_TOL};
