//! Minmax finite-element solution of the two-center one-electron Dirac
//! equation in singularly transformed prolate-spheroidal coordinates.
//!
//! The pipeline runs bottom-up: [`geometry`] maps the computational
//! rectangle `(s, t)` onto the physical space, [`mesh`] triangulates it,
//! [`basis`] supplies order-p Lagrange shape functions and the singular
//! global factors, [`assembly`] integrates the matrix family of the minmax
//! weak form, [`solver`] runs the nonlinear eigenvalue iteration, and
//! [`analysis`] drives grid ladders and convergence studies. [`cli`] holds
//! the flat run configuration and report writers of the binary.

pub mod error;
pub mod geometry;
pub mod mesh;
pub mod basis;
pub mod dd;
pub mod sparse;
pub mod assembly;
pub mod solver;
pub mod analysis;
pub mod cli;

pub use error::{Error, Result};
