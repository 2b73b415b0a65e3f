//! Numerical laboratory for cheap-control cost design.
//!
//! The crate is organised bottom-up:
//!
//! - [`systems`]: control-affine plants, strict-feedback normal forms and
//!   phase classification of the zero dynamics.
//! - [`transforms`]: the `ε = ε̃^{2r}` reparameterisation and the fast-slow
//!   coordinate scaling.
//! - [`ocp`]: finite-horizon optimal control by direct shooting, plus
//!   Riccati and minimum-energy oracles for linear plants.
//! - [`rhc_vi`]: sampled-data receding-horizon loops, stability verdicts and
//!   value iteration.
//! - [`certificates`]: detectability certificates, the horizon bound and
//!   performance-scaling fits.

// `!(x > 0.0)` guards reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod certificates;
pub mod error;
pub mod linalg;
pub mod ocp;
pub mod rhc_vi;
pub mod sampling;
pub mod systems;
pub mod transforms;

pub use error::{Error, Result};
