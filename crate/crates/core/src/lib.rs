//! Pseudo-spectral laboratory for the non-cutoff Boltzmann operator, the
//! fractional kinetic Fokker–Planck toy models, and the vector fields `H_δ`.

pub mod cli;
pub mod collision;
pub mod error;
pub mod gevrey;
pub mod kinetic;
pub mod quad;
pub mod spectral;
pub mod toy;
pub mod vecfield;

pub use error::{Error, Result};
