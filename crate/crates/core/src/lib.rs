//! Data-driven spectral analysis of stochastic Koopman operators.
//!
//! The pipeline assembles Galerkin estimates of the Koopman operator from
//! snapshot data ([`matrices`]), solves the EDMD eigenproblem and attaches two
//! residuals to every eigenpair ([`spectral`]): the variance residual, which
//! only needs one realization per state, and the residual proper, which needs
//! batched data with independent realizations. [`pseudospectra`] minimizes the
//! same quadratic forms over complex grids, [`forecast`] and [`bounds`]
//! evaluate forecast error and concentration guarantees, and [`systems`]
//! provides benchmark systems with known spectra.

pub mod bounds;
pub mod dictionary;
mod error;
pub mod forecast;
pub mod linalg;
pub mod matrices;
pub mod pseudospectra;
pub mod rng;
pub mod snapshots;
pub mod spectral;
pub mod systems;

pub use error::{Error, Result};
pub use faer::c64;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
