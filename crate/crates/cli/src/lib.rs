//! Numeric companion and scenario runner for the `moyal` algebra crate.
//!
//! The symbolic core is deliberately free of IO and floating point; this
//! crate adds the other half: sampled wavefunctions on midpoint grids,
//! Wigner-type phase-space transforms, unitary integral kernels for the
//! canonical transformation families, operator application with spectral
//! or stencil derivatives, and a deterministic scenario runner with
//! machine-readable JSON reports behind the `moyal` binary.

pub mod error;
pub mod examples;
pub mod grid;
pub mod intertwine;
pub mod opapply;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod unitary;
pub mod wigner;

pub use error::{CliError, Result};
