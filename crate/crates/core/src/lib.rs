//! Adaptive Bayesian phase estimation with squeezed vacuum and homodyne
//! detection.
//!
//! The crate is organised bottom-up:
//!
//! - [`quadrature`]: the Gaussian homodyne model, sampling and noise units.
//! - [`geometry`]: Fisher information, bounds and feedback angles.
//! - [`smc`]: the particle approximation of the posterior, with the
//!   [`oracle`] grid posterior and the [`eta`] efficiency profile.
//! - [`protocol`]: stage planning, LO feedback and full estimation runs.

pub mod error;
pub mod eta;
pub mod geometry;
pub mod oracle;
pub mod protocol;
pub mod quadrature;
pub mod smc;

pub use error::{Error, Result};
pub use protocol::{run_estimation, Mode, ProtocolConfig, RunRecord};
pub use quadrature::{ProbeParams, QuadratureAngle, QuadratureSample};
