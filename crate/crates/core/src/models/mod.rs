//! Experiment models packaged as [`SsmDefinition`](crate::SsmDefinition)s.

pub mod linear;
pub mod lorenz96;
pub mod swe;

pub use linear::{linear_gaussian_model, IdentityDrift, LinearDrift};
pub use lorenz96::{lorenz96_drift, lorenz96_model, rk4_step, Lorenz96Drift};
pub use swe::{swe_model, SweDrift, SweGrid, SweParams};
