//! Leggett–Garg inequality tests with ideal negative measurements in a
//! two-path interferometer.
//!
//! - [`optics`]: density-operator states and interferometer elements.
//! - [`protocol`]: closed-form and blocked-path correlators, parameter sweeps.
//! - [`counting`]: Poisson detector simulation and count-ratio estimators.
//! - [`fitting`]: weighted least-squares fits of interferograms and beam profiles.
//! - [`analysis`]: from count records to `K` and its significance.
//! - [`config`], [`csvio`], [`cli`]: configuration files, CSV schemas and the
//!   `lgi` command line.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod counting;
pub mod csvio;
pub mod error;
pub mod fitting;
pub mod optics;
pub mod protocol;

pub use error::{Error, Result};
