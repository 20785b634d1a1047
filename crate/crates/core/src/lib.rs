//! Entanglement diagnostics for quadratic (free-fermion) lattice models,
//! Hermitian or not.
//!
//! The pipeline is `model_zoo` (kernel matrices) -> `spectra` (biorthogonal
//! eigenbasis and occupation) -> `corr` (subsystem correlation matrix) ->
//! `ent` (entanglement spectrum and entropies) -> `scaling` (central-charge
//! fits). `dynamics` evolves Gaussian states under non-Hermitian kernels and
//! `oracle` is a brute-force Fock-space cross-check for small systems.

pub mod corr;
pub mod dynamics;
pub mod ent;
pub mod error;
pub mod linalg;
pub mod model_zoo;
pub mod oracle;
pub mod scaling;
pub mod spectra;

pub use error::{Error, Result, Warning, WarningKind};
pub use linalg::{CMat, C64};
