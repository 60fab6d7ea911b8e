//! Periodic homogenization and small-strain linearization of nonconvex
//! elastic energy densities on periodic Q1 finite-element grids.

pub mod analysis;
pub mod assembly;
pub mod cell;
pub mod density;
pub mod domain;
pub mod error;
pub mod grid;
pub mod lbfgs;
pub mod linalg;
pub mod surrogate;
pub mod tensor;

#[cfg(test)]
mod tests;

pub use cell::{CellResult, HomTensor, SolverOptions, StartConfig, StartSet};
pub use density::{BaseKind, Density, Microstructure, Phase, PhaseMask, QuadraticField};
pub use error::{Error, Result};
pub use grid::{PeriodicField, PeriodicGrid};
pub use tensor::{Mat, SymTensor4};
