//! Spectral simulation and variational analysis for the dipolar
//! Gross-Pitaevskii equation
//!
//! ```text
//! i u_t + (1/2) Laplacian u = lambda1 |u|^2 u + lambda2 (K * |u|^2) u
//! ```
//!
//! on a periodic box standing in for R^3.

pub mod dealias;
pub mod error;
pub mod evolution;
pub mod functionals;
pub mod ground_state;
pub mod io;
pub mod profiles;
pub mod random;
pub mod scaling;
pub mod spectral;
pub mod virial;

pub use error::{Error, Result};
pub use functionals::{FunctionalReport, PhysParams, Regime};
pub use spectral::{ComplexField, Grid, GridSpec, SpectralField};
