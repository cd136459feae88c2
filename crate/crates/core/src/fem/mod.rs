//! Q1 finite elements on structured grids.

pub mod assembly;
pub mod cg;
pub mod mesh;
pub mod q1;
pub mod sparse;

pub use assembly::{assemble_mass, assemble_robin_boundary, assemble_stiffness, CoefficientField};
pub use cg::{solve_spd, solve_spd_singular, SolveStats, SolverOptions};
pub use mesh::{Element, Facet, QuadMesh};
pub use sparse::{CsrBuilder, CsrMatrix};
