//! Monte Carlo estimation over continuously indexed model hierarchies.
//!
//! Samples refine to a random stopping level drawn from an exponential or
//! discrete law; per-interval weights built from the law's survival
//! function turn the telescoping level increments into an estimator of
//! the fully resolved expectation, unbiased when the level is unbounded.
//! The crate bundles the weight and estimator kernels, rate calibration
//! and tolerance-driven parameter selection, a closed-form synthetic
//! hierarchy, an adaptive 1D elliptic PDE hierarchy with a lognormal
//! coefficient field, and a deterministic parallel run harness.

pub mod calibration;
pub mod estimators;
pub mod harness;
pub mod hierarchy;
pub mod level_law;
pub mod pde;
pub mod rng;
pub mod synthetic;

pub use calibration::{
    bin_level_statistics, biased_truncation_level, fit_rates, required_samples, select_parameters,
    select_rate, unbiased_feasibility, CalibrationError, EstimatorConfig, EstimatorMode, LevelBin,
    RateEstimates,
};
pub use estimators::{
    clmc_estimate, estimator_variance, fit_piecewise_polynomial, five_point_stencil_estimate,
    interval_weight, mlmc_estimate, polynomial_contribution, rhee_glynn_estimate,
    sample_contribution, EstimateResult, EstimatorError, MlmcInput, StencilConfig,
};
pub use harness::{
    run_calibrate, run_estimate, run_kl_validate, run_sweep, ExperimentConfig, ExplicitParams,
    HarnessError, KlValidation, ModelConfig,
};
pub use hierarchy::{
    build_path, build_pilot_path, HierarchyModel, PathError, Refinement, SamplePath,
};
pub use level_law::{LawError, LevelLaw};
pub use pde::{Pde1dConfig, Pde1dModel, PdeError, RefinementMode};
pub use synthetic::{
    stationary_pair_samples, synthetic_true_increment_mean, PairProcessParams, SyntheticModel,
    SyntheticParams,
};
