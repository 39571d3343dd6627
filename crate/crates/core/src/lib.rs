//! Detection of a single change point in the spectral density of a
//! univariate time series.
//!
//! Each side of a candidate split is approximated by a finite-order
//! autoregression fitted by Yule-Walker. A sweep over splits gives a
//! near-optimal estimate, refitting and re-optimising with frozen models
//! gives the final estimate, and the argmax of a two-sided drifted Brownian
//! motion supplies confidence intervals.
//!
//! ```
//! use wold_cp::{detect, generate_scenario, DetectionConfig, Scenario, ScenarioSpec};
//!
//! let spec = ScenarioSpec::new(Scenario::III, 500, 250).with_phi(-0.9);
//! let x = generate_scenario(&spec, 7).unwrap();
//! let result = detect(&x, &DetectionConfig::default()).unwrap();
//! assert!(result.k_tilde.abs_diff(250) <= 10);
//! ```

// NaN inputs must fall into the rejecting branch of these comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ar;
pub mod detection;
pub mod error;
pub mod inference;
pub mod series;
pub mod simulation;

pub use ar::{
    aic_table, ar_spectral_density, default_max_lag, frequency_grid, residuals,
    sample_autocovariance, select_lag_aic, yule_walker, AicTable, ArModel, AutocovarianceVector,
};
pub use detection::{
    detect, near_optimal_estimate, optimal_estimate, refit_models, stage1_lags, stage1_loss,
    DetectionConfig, DetectionResult, LagMode, NearOptimalEstimate, OptimalEstimate, Refit,
    ResolvedConfig, SegmentLags, SplitFit,
};
pub use error::{Error, Result};
pub use inference::{
    confidence_interval, infer, nuisance_estimates, nuisance_estimates_with, probs_for_levels,
    simulate_argmax_quantiles, ArgmaxParams, ConfidenceInterval, Inference, InferenceSettings,
    McSettings, NoiseInteraction, NuisanceEstimates, QuantileTable, DEFAULT_PROBS,
    QUANTILE_SCHEMA_VERSION,
};
pub use series::TimeSeries;
pub use simulation::{
    generate_scenario, run_replications, run_replications_with, true_spectral_curves, Failure,
    LevelSummary, Process, ReplicateEstimator, ReplicateOutcome, ReplicationReport, Scenario,
    ScenarioSpec, Splice, TwoStageEstimator, AR3_COEFFS,
};
