//! Numerical laboratory for two-level avoided crossings with tangential
//! intersections: exact scattering by ODE integration, transfer-matrix
//! asymptotics, and the interference and regime-switch effects they predict.

pub mod error;
pub mod fit;
pub mod harness;
pub mod jet;
pub mod linalg;
pub mod msa;
pub mod oscillatory;
pub mod potential;
pub mod predictor;
pub mod propagator;
pub mod quad;
pub mod scattering;
pub mod transfer;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
