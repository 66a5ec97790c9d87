//! Tempered SMC machinery: log-weights, ESS, resampling and temperature
//! schedules.

mod resample;
mod sampler;
mod temper;
mod weights;

pub use resample::{multinomial_resample, systematic_resample, ResampleScheme};
pub use sampler::{run_tempering, smc_sampler, KernelStats, SamplerDiagnostics, TemperedKernel, TemperingOptions};
pub use temper::{solve_temper_increment, TemperMode, TemperSchedule};
pub use weights::{ess, log_sum_exp, normalize_log_weights, WeightedEnsemble};
