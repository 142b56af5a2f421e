//! P1 finite elements for the thermal fin with a Robin (Biot) boundary.

pub mod assembly;
pub mod mesh;

pub use assembly::{affine_coefficients, assemble, element_stiffness, weighted_edge_mass, AffineOperator, FinParams, SOLVE_TOL};
pub use mesh::{generate_fin_mesh, BoundaryEdge, BoundaryLabel, Mesh, Region};
