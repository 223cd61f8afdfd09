//! Gaussian-process emulation and modular Bayesian inverse uncertainty
//! quantification.
//!
//! The crate covers space-filling designs ([`design`]), correlation kernels
//! ([`kernel`]), Kriging emulators ([`emulator`]), their validation metrics
//! ([`diagnostics`]) and the calibration workflow that combines a code
//! emulator with a model-discrepancy emulator ([`calibration`]).

pub mod calibration;
pub mod design;
pub mod diagnostics;
pub mod emulator;
pub mod error;
pub mod kernel;
pub mod linalg;

pub use error::{Error, Result, Stage};
