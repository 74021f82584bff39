//! Energy-preserving full and reduced order models of the non-traditional
//! shallow water equation.
//!
//! The full order model is a central-difference discretization on a periodic
//! grid, advanced in time by the average vector field method. Reduced models
//! are built from its snapshots by POD with a skew-symmetry preserving
//! Galerkin projection, optionally hyper-reduced with DEIM.

pub mod config;
pub mod deim;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod pod;
pub mod scenario;
pub mod sparse;

pub use error::{Error, Result};
