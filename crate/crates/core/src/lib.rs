//! Numerical laboratory for heat kernel bounds of the fractional Laplacian
//! perturbed by the critical Hardy-type drift κ|x|^{−α}x.

pub mod appendix_props;
pub mod error;
pub mod io;
pub mod model;
pub mod quad;
pub mod sampler;
pub mod simulator;
pub mod specfun;
pub mod stable_kernel;
pub mod stats;
pub mod verifier;

pub use error::{Error, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
