//! The lagged particle filter.
//!
//! At time `n` the filter targets the lagged law in which `x_{n-L+1}` is
//! drawn from a user-supplied Gaussian `mu_{n-L}` instead of the
//! transition, which makes `x_{1:n-L}` independent of the last `L` states.
//! Only the last `L + 1` states (plus one anchor state) are kept per
//! particle. Each observation triggers an adaptive tempering pass from the
//! previous target, extended by the dynamics, to the new one, with
//! random-walk Metropolis moves on the window at every temperature.
//!
//! With observations every `k` steps the window spans the `L + k` states
//! whose density changes between consecutive observation times; no
//! reweighting happens in between.

mod filter;
mod proposal;
mod rwm;

pub use filter::{
    filter_estimate, incremental_log_weight, run_lagged_filter, LaggedConfig, LaggedFilter,
    StepDiagnostics, WindowParticle,
};
pub use proposal::{
    mu_from_etkf_sqrt_predictor, mu_from_kalman_predictor, MuConfig, MuCov, MuSource,
    PredictorSource, ProposalMu,
};
pub use rwm::{
    adapt_proposal_scale, proposal_sd, rwm_sweep, temperature_factor, RwmConfig, MAX_MULTIPLIER,
    MIN_MULTIPLIER,
};

#[cfg(test)]
mod tests;
