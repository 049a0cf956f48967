//! Bayesian spatial autoregressive panel model with time-varying multilayer
//! networks, country-specific network exposures, stochastic volatility, and
//! time-varying direct/indirect spillover effects.
//!
//! The crate is organized around the estimation pipeline:
//!
//! * [`ingestion`] — parse event records and market data into model inputs.
//! * [`networks`] — construct, normalize, and validate multilayer panels.
//! * [`model`] — the structural model, exact log-likelihood, and a synthetic
//!   data generator.
//! * [`mcmc`] — posterior sampling (Gibbs blocks, independent MH on the layer
//!   weights, slice sampling for the exposures, auxiliary-mixture stochastic
//!   volatility updates).
//! * [`spillovers`] — spatial multiplier and direct/indirect/total effect
//!   series from posterior draws.
//! * [`diagnostics`] — posterior summaries, densities, and correlation tables.

pub mod diagnostics;
pub mod ingestion;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod networks;
pub mod spillovers;
pub mod stats;

mod error;

pub use error::{ConstraintError, Error, Result};
