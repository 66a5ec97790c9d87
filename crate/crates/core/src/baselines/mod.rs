//! Reference filters: exact Kalman filter and three ensemble Kalman variants.
//!
//! None of them use inflation or localization.

mod ensemble;
mod kalman;

pub use ensemble::{
    enkf_step, ensemble_analysis, ensemble_forecast, etkf_sqrt_step, etkf_step, EnsembleKind,
    EnsembleState,
};
pub use kalman::{kalman_filter, kalman_predict, kalman_update, KalmanRun, KalmanState, MAX_KALMAN_DIM};
