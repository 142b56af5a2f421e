//! Dense and sparse linear algebra used by the estimators and the FE/RB solvers.

mod cholesky;
mod dense;
mod eigen;
mod mgs;
mod sparse;

pub use cholesky::Cholesky;
pub use dense::{axpy, dot, norm2, DenseMatrix};
pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use mgs::MgsQr;
pub use sparse::{CsrMatrix, SkylineCholesky, SparsityPattern};
