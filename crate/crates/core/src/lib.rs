//! Numerical laboratory for angular-momentum bookkeeping in quantum measurement.
//!
//! The crate contains:
//!
//! * [`kernel`]: dense complex linear algebra over tensor-product spaces;
//! * [`spin`]: spin-j algebras, coherent states and the Bloch map;
//! * [`ideal`]: the ideal-measurement algebra and the violation classifier;
//! * [`apparatus`]: an exactly conserving measurement of a spin-½ particle by
//!   a spin-L apparatus with a record qubit;
//! * [`decoherence`]: record amplification into an environment register;
//! * [`experiments`]: seeded satellite and lucky-streak studies;
//! * [`cli`] and [`output`]: the `conslab` command-line surface.
//!
//! ħ = 1 everywhere except in [`apparatus::thermal_orientation_uncertainty`].

pub mod apparatus;
pub mod cli;
pub mod decoherence;
mod error;
pub mod experiments;
pub mod ideal;
pub mod kernel;
pub mod numerics;
pub mod output;
pub mod spin;

pub use error::{Error, Result};

/// Real 3-vector.
pub type Vec3 = [f64; 3];
/// Complex 3-vector.
pub type CVec3 = [kernel::C64; 3];
