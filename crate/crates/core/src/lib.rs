pub mod boundary_ops;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod l2_harmonic;
pub mod linalg;
pub mod potentials;
pub mod singular_solutions;
pub mod quadrature;
pub mod solvers;
pub mod special_densities;

pub use error::{Error, Result};
