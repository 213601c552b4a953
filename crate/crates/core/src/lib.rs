//! Frequency-domain simulator and gradient-based synthesis engine for
//! square-mesh programmable photonic circuits.
//!
//! The mesh is a grid of 2x2 Mach-Zehnder cells (TBUs). The crate assembles
//! the global scattering matrix analytically column by column, computes exact
//! cost gradients with respect to every phase shift, and optimizes the mesh
//! to realize target optical transfer functions (routing, splitting,
//! filtering, WDM).

pub mod autodiff;
pub mod compact_model;
pub mod error;
pub mod mesh_solver;
pub mod nonideality;
pub mod objectives;
pub mod optimizer;
pub mod relaxation_oracle;
pub mod reporting;

pub use error::{Error, Result};
