//! Linear regression with an uncertain random intercept.
//!
//! The model is `y = x' beta + nu + eps`, where the intercept `nu` drifts between unknown
//! segments inside `[mu_lower, mu_upper]` and the error variance may differ across them.
//! Estimation runs in two steps:
//!
//! 1. slopes by an EM iteration that treats intercepts as constant within short windows of
//!    `n0` rows ([`estimator`]); its fixed point has a closed form;
//! 2. intercept bounds as the extremes of moving-block means of `y - X beta_hat` over
//!    blocks of length `w` ([`bounds`]).
//!
//! [`simulation`] holds the Monte Carlo harness, [`pm25`] the daily PM2.5 design pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod data;
pub mod error;
pub mod estimator;
pub mod inference;
mod linalg;
pub mod pm25;
pub mod report;
pub mod simulation;

pub use bounds::{
    estimate_bounds, group_bounds, intercept_bounds, moving_block_intercepts, predict_interval,
    w_robust_targets, BoundsEstimate, BoundsSource, PredictionInterval, WRobustTargets,
};
pub use data::{partition_windows, plan_from_groups, validate_dataset, Dataset, ModelParams, PlanSource, WindowPlan};
pub use error::{EmmbError, Result};
pub use estimator::{
    estep_intercepts, fit_closed_form, fit_em, fit_from_beta, fit_ols, fit_weighted_groups, mstep_beta,
    EmConfig, EmFit, EmInit, EstimatorDiagnostics, OlsFit,
};
pub use inference::{coef_inference, estimate_sigma_tilde2, fit_statistics, ols_inference, CoefTable};
pub use linalg::SINGULAR_RTOL;
pub use report::TableFormat;
pub use pm25::{
    aggregate_daily, engineer_features, heating_indicator, prepare_design, read_hourly_csv, recover_hourly_wind,
    DailyRow, HeatingCalendar, HourlyRecord, PmDesign, Seasons,
};
pub use simulation::{emit_table, generate, run_monte_carlo, run_reps, DgpSpec, DgpTruth, McConfig, McSummary, Variant};
