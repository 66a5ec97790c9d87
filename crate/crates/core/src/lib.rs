//! Lagged particle filtering for high-dimensional state-space models.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: the Gaussian state-space model contract ([`SsmDefinition`]),
//!   the [`StateSpaceModel`] trait consumed by the filters, and the
//!   coordinatewise-factorized test family.
//! - [`models`]: linear-Gaussian, stochastic Lorenz 96 and the conservative
//!   shallow-water finite-volume solver.
//! - [`smc`]: log-weight bookkeeping, ESS, resampling and tempering schedules.
//! - [`lagged`]: the lagged particle filter with adaptive tempering and
//!   random-walk Metropolis moves over the lag window.
//! - [`baselines`]: Kalman filter, EnKF, ETKF and ETKF-SQRT.
//!
//! All densities are handled in log space.

pub mod baselines;
pub mod error;
pub mod lagged;
pub mod model;
pub mod models;
pub mod rng;
pub mod smc;

pub use error::{Error, Result};
pub use model::{Drift, NoiseCov, ObsOperator, SsmDefinition, StateSpaceModel};
