//! Finite elements for the Poisson equation with Dirichlet data on curved
//! three-dimensional domains.
//!
//! The main method keeps the polyhedral mesh but evaluates the trial space
//! at nodes shifted onto the true boundary, which restores optimal order for
//! quadratic and cubic Lagrange elements. A standard polyhedral Galerkin
//! baseline and a quadratic nonconforming variant are included.

pub mod analysis;
pub mod assembly;
pub mod checks;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod nonconforming;
pub mod numbering;
pub mod solver;
pub mod sparse;
pub mod trial;

pub use error::{Error, Result};
pub use geometry::{Surface, Vec3};
pub use mesh::Mesh;
