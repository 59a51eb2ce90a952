//! Run orchestration: calibration, estimation, sweeps, and reporting.
//!
//! A run is described by an [`ExperimentConfig`], executes with
//! deterministic parallel path building, aggregates in sample order, and
//! writes versioned JSON/CSV artifacts whose bytes depend only on the
//! configuration and seed, never on scheduling.

pub mod config;
pub mod parallel;
pub mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::calibration::{
    bin_level_statistics, biased_truncation_level, fit_rates, select_parameters, select_rate,
    unbiased_feasibility, CalibrationError, EstimatorMode, RateEstimates,
};
use crate::estimators::{clmc_estimate, estimator_variance, total_sample_values, EstimatorError};
use crate::hierarchy::PathError;
use crate::level_law::{LawError, LevelLaw};
use crate::pde::kl::{analytic_eigenvalues, kl_decompose, KlError};

pub use config::{ExperimentConfig, ExplicitParams, ModelConfig, PreparedModel};
pub use parallel::{build_paths_parallel, build_pilot_paths_parallel, effective_workers};
pub use report::{
    EstimateArtifact, RatesArtifact, SweepArtifact, SweepFailure, SweepPoint, FORMAT_VERSION,
};

use report::{write_bins_csv, write_contributions_csv, write_json, write_sweep_csv};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("field decomposition failed: {0}")]
    Field(#[from] KlError),
}

/// Calibration results with the paths of the written artifacts.
#[derive(Debug)]
pub struct CalibrationOutcome {
    pub rates: RateEstimates,
    pub rates_path: PathBuf,
    pub bins_path: PathBuf,
}

/// Estimation results with the paths of the written artifacts.
#[derive(Debug)]
pub struct EstimateOutcome {
    pub artifact: EstimateArtifact,
    pub estimate_path: PathBuf,
    pub contributions_path: PathBuf,
}

/// Sweep results with the paths of the written artifacts.
#[derive(Debug)]
pub struct SweepOutcome {
    pub artifact: SweepArtifact,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| HarnessError::Io(format!("cannot create {}: {e}", dir.display())))
}

/// Build pilot paths, fit rates, and write rates.json plus bins.csv.
pub fn run_calibrate(config: &ExperimentConfig) -> Result<CalibrationOutcome, HarnessError> {
    config.validate()?;
    ensure_dir(&config.output_dir)?;
    let workers = effective_workers(config.workers)?;
    let prepared = config.model.build()?;
    calibrate_into(config, &prepared, workers, &config.output_dir)
}

fn calibrate_into(
    config: &ExperimentConfig,
    prepared: &PreparedModel,
    workers: usize,
    dir: &Path,
) -> Result<CalibrationOutcome, HarnessError> {
    let paths = build_pilot_paths_parallel(
        &*prepared.model,
        config.seed,
        0,
        config.pilot_size,
        config.pilot_target_level,
        workers,
    )?;
    let bins = bin_level_statistics(&paths, config.bin_width)?;
    let rates = fit_rates(&bins)?;
    let artifact = RatesArtifact {
        format_version: FORMAT_VERSION,
        model: prepared.label.clone(),
        pilot_size: config.pilot_size,
        pilot_target_level: config.pilot_target_level,
        bin_width: config.bin_width,
        seed: config.seed,
        rates: rates.clone(),
    };
    let rates_path = write_json(dir, "rates.json", &artifact)?;
    let bins_path = write_bins_csv(dir, &bins)?;
    Ok(CalibrationOutcome {
        rates,
        rates_path,
        bins_path,
    })
}

/// Rates for an estimation run: reuse rates.json when present, otherwise
/// calibrate now and leave the artifact behind.
fn load_or_calibrate(
    config: &ExperimentConfig,
    prepared: &PreparedModel,
    workers: usize,
) -> Result<RateEstimates, HarnessError> {
    if let Some(artifact) = report::read_rates(&config.output_dir)? {
        if artifact.model != prepared.label {
            return Err(HarnessError::Config(format!(
                "rates.json in {} was calibrated for model {:?}, but this run uses {:?}; \
                 recalibrate or use a fresh output directory",
                config.output_dir.display(),
                artifact.model,
                prepared.label
            )));
        }
        return Ok(artifact.rates);
    }
    Ok(calibrate_into(config, prepared, workers, &config.output_dir)?.rates)
}

/// Run one estimation end to end per the configuration.
pub fn run_estimate(config: &ExperimentConfig) -> Result<EstimateOutcome, HarnessError> {
    config.validate()?;
    ensure_dir(&config.output_dir)?;
    let workers = effective_workers(config.workers)?;
    let prepared = config.model.build()?;
    match (config.epsilon, &config.explicit) {
        (Some(epsilon), None) => {
            let rates = load_or_calibrate(config, &prepared, workers)?;
            estimate_with_rates(config, &prepared, &rates, epsilon, &config.output_dir, workers)
        }
        (None, Some(explicit)) => estimate_explicit(config, &prepared, explicit, workers),
        _ => Err(HarnessError::Config(
            "an estimation run needs exactly one of epsilon or explicit parameters".into(),
        )),
    }
}

/// Tolerance-driven estimation: select parameters from fitted rates, size
/// the run with a variance pilot, then sample and aggregate.
///
/// Unbiased feasibility is checked before any path is built. The variance
/// pilot occupies sample indices `0..pilot_size`; the main run starts at
/// `pilot_size` so no stream is used twice. Reported cost covers the main
/// run only.
fn estimate_with_rates(
    config: &ExperimentConfig,
    prepared: &PreparedModel,
    rates: &RateEstimates,
    epsilon: f64,
    out_dir: &Path,
    workers: usize,
) -> Result<EstimateOutcome, HarnessError> {
    ensure_dir(out_dir)?;
    let mode = config.mode;
    let (rate, _) = select_rate(rates.beta, rates.gamma);
    if mode == EstimatorMode::Unbiased {
        let feasibility =
            unbiased_feasibility(rates.beta, rates.gamma, config.feasibility_margin);
        if !feasibility.feasible {
            return Err(CalibrationError::Infeasible {
                beta: rates.beta,
                gamma: rates.gamma,
                margin: config.feasibility_margin,
            }
            .into());
        }
    }
    let truncation = match mode {
        EstimatorMode::Biased => Some(biased_truncation_level(
            rates.alpha,
            rates.c1,
            rate,
            epsilon,
        )),
        EstimatorMode::Unbiased => None,
    };
    let law = LevelLaw::Exponential { rate };
    law.validate()?;
    let machine_limit = prepared.machine_limit(Some(rates));

    let pilot_count = config.pilot_size;
    let pilot_paths = build_paths_parallel(
        &*prepared.model,
        &law,
        config.seed,
        0,
        pilot_count,
        truncation,
        machine_limit,
        workers,
    )?;
    // Sample sizing must control the error of the combined estimate, so the
    // pilot variance is taken over the per-sample totals Q_0 + Y; the base
    // level dominates when the quantity itself is noisy. estimator_variance
    // returns the variance of the pilot mean s^2/n; parameter selection
    // needs the per-sample variance s^2.
    let pilot_totals = total_sample_values(&pilot_paths, &law)?;
    let pilot_var_y = estimator_variance(&pilot_totals)? * pilot_totals.len() as f64;

    let (selected, mut warnings) =
        select_parameters(rates, epsilon, mode, pilot_var_y, config.feasibility_margin)?;
    debug_assert_eq!(selected.rate, rate);
    debug_assert_eq!(selected.truncation_level, truncation);
    let mut n = selected.sample_count;
    if n > config.max_samples {
        warnings.push(format!(
            "selected sample count {n} exceeds the configured cap {}; clamping",
            config.max_samples
        ));
        n = config.max_samples;
    }

    let main_paths = build_paths_parallel(
        &*prepared.model,
        &law,
        config.seed,
        pilot_count as u64,
        n,
        truncation,
        machine_limit,
        workers,
    )?;
    let result = clmc_estimate(&main_paths, &law)?;
    // Reported uncertainty covers the whole estimate, base included, not
    // just the increment part the estimator core tracks.
    let total_variance = estimator_variance(&total_sample_values(&main_paths, &law)?)?;
    let machine_truncated_paths = main_paths.iter().filter(|p| p.machine_truncated).count();
    let tail_overflow = (mode == EstimatorMode::Unbiased)
        .then(|| law.tail_overflow(n as u64, machine_limit));

    let artifact = EstimateArtifact {
        format_version: FORMAT_VERSION,
        model: prepared.label.clone(),
        mode,
        seed: config.seed,
        epsilon: Some(epsilon),
        r: Some(rate),
        law: law.clone(),
        l_max: truncation,
        n,
        estimate: result.total_estimate,
        base_estimate: result.base_estimate,
        increment_estimate: result.increment_estimate,
        stderr: total_variance.sqrt(),
        variance: total_variance,
        cost: result.total_cost,
        machine_truncated_paths,
        tail_overflow,
        warnings,
    };
    let estimate_path = write_json(out_dir, "estimate.json", &artifact)?;
    let contributions_path = write_contributions_csv(out_dir, &main_paths, &result)?;
    Ok(EstimateOutcome {
        artifact,
        estimate_path,
        contributions_path,
    })
}

/// Estimation with caller-chosen parameters: no calibration, no pilot.
fn estimate_explicit(
    config: &ExperimentConfig,
    prepared: &PreparedModel,
    explicit: &ExplicitParams,
    workers: usize,
) -> Result<EstimateOutcome, HarnessError> {
    let law = match (&config.law, explicit.r) {
        (Some(law), None) => law.clone(),
        (None, Some(r)) => LevelLaw::Exponential { rate: r },
        // Config validation rejects the other combinations.
        _ => unreachable!("validated: exactly one of law override and explicit rate"),
    };
    law.validate()?;
    let machine_limit = prepared.machine_limit(None);
    let paths = build_paths_parallel(
        &*prepared.model,
        &law,
        config.seed,
        0,
        explicit.n,
        explicit.l_max,
        machine_limit,
        workers,
    )?;
    let result = clmc_estimate(&paths, &law)?;
    let total_variance = estimator_variance(&total_sample_values(&paths, &law)?)?;
    let machine_truncated_paths = paths.iter().filter(|p| p.machine_truncated).count();
    let tail_overflow = (config.mode == EstimatorMode::Unbiased)
        .then(|| law.tail_overflow(explicit.n as u64, machine_limit));
    let artifact = EstimateArtifact {
        format_version: FORMAT_VERSION,
        model: prepared.label.clone(),
        mode: config.mode,
        seed: config.seed,
        epsilon: None,
        r: explicit.r,
        law: law.clone(),
        l_max: explicit.l_max,
        n: explicit.n,
        estimate: result.total_estimate,
        base_estimate: result.base_estimate,
        increment_estimate: result.increment_estimate,
        stderr: total_variance.sqrt(),
        variance: total_variance,
        cost: result.total_cost,
        machine_truncated_paths,
        tail_overflow,
        warnings: Vec::new(),
    };
    let estimate_path = write_json(&config.output_dir, "estimate.json", &artifact)?;
    let contributions_path = write_contributions_csv(&config.output_dir, &paths, &result)?;
    Ok(EstimateOutcome {
        artifact,
        estimate_path,
        contributions_path,
    })
}

/// Run one tolerance-driven estimate per epsilon, sharing one calibration,
/// and summarize the cost-accuracy relation.
pub fn run_sweep(
    config: &ExperimentConfig,
    epsilons: &[f64],
) -> Result<SweepOutcome, HarnessError> {
    if epsilons.len() < 3 {
        return Err(HarnessError::Config(format!(
            "a sweep needs at least 3 epsilon values, got {}",
            epsilons.len()
        )));
    }
    if let Some(bad) = epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(HarnessError::Config(format!(
            "sweep epsilon values must be positive, got {bad}"
        )));
    }
    config.validate()?;
    if config.explicit.is_some() {
        return Err(HarnessError::Config(
            "sweeps are tolerance-driven; remove explicit parameters".into(),
        ));
    }
    ensure_dir(&config.output_dir)?;
    let workers = effective_workers(config.workers)?;
    let prepared = config.model.build()?;
    let rates = load_or_calibrate(config, &prepared, workers)?;

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (i, &epsilon) in epsilons.iter().enumerate() {
        let sub = config.output_dir.join(format!("eps_{i}"));
        match estimate_with_rates(config, &prepared, &rates, epsilon, &sub, workers) {
            Ok(outcome) => points.push(SweepPoint {
                epsilon,
                estimate: outcome.artifact.estimate,
                stderr: outcome.artifact.stderr,
                cost: outcome.artifact.cost,
                n: outcome.artifact.n,
                r: outcome.artifact.r,
                l_max: outcome.artifact.l_max,
            }),
            Err(e) => failures.push(SweepFailure {
                epsilon,
                error: e.to_string(),
            }),
        }
    }

    let artifact = SweepArtifact {
        format_version: FORMAT_VERSION,
        model: prepared.label.clone(),
        mode: config.mode,
        seed: config.seed,
        cost_stderr_slope: cost_stderr_slope(&points),
        points,
        failures,
    };
    let csv_path = write_sweep_csv(&config.output_dir, &artifact.points)?;
    let json_path = write_json(&config.output_dir, "sweep.json", &artifact)?;
    Ok(SweepOutcome {
        artifact,
        csv_path,
        json_path,
    })
}

/// Least-squares slope of log(cost) against log(stderr) over the sweep
/// points; `None` with fewer than two usable points.
fn cost_stderr_slope(points: &[SweepPoint]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.stderr > 0.0 && p.cost > 0.0)
        .map(|p| (p.stderr.ln(), p.cost.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let x_bar = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let y_bar = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - x_bar).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs
        .iter()
        .map(|p| (p.0 - x_bar) * (p.1 - y_bar))
        .sum();
    Some(sxy / sxx)
}

/// One mode's spectral validation row.
#[derive(Clone, Debug, serde::Serialize)]
pub struct KlModeCheck {
    pub index: usize,
    pub computed: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

/// Spectral-basis validation report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct KlValidation {
    pub format_version: u32,
    pub modes: usize,
    pub grid_size: usize,
    pub captured_fraction: f64,
    /// First five (or fewer) modes against the transcendental solution.
    pub checks: Vec<KlModeCheck>,
    pub tolerance: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Compare the computed covariance spectrum against the closed-form
/// transcendental solution for the default correlation rate.
pub fn run_kl_validate(modes: usize, grid_size: usize) -> Result<KlValidation, HarnessError> {
    const RATE: f64 = 3.0;
    const TOLERANCE: f64 = 0.005;
    let basis = kl_decompose(RATE, modes, grid_size)?;
    let checked = modes.min(5);
    let analytic = analytic_eigenvalues(RATE, checked);
    let checks: Vec<KlModeCheck> = (0..checked)
        .map(|i| {
            let computed = basis.eigenvalues[i];
            let frame = analytic[i];
            KlModeCheck {
                index: i,
                computed,
                analytic: frame,
                relative_error: (computed - frame).abs() / frame,
            }
        })
        .collect();
    let pass = checks.iter().all(|c| c.relative_error <= TOLERANCE);
    Ok(KlValidation {
        format_version: FORMAT_VERSION,
        modes,
        grid_size,
        captured_fraction: basis.captured_fraction,
        checks,
        tolerance: TOLERANCE,
        pass,
        warnings: basis.warnings,
    })
}

#[cfg(test)]
pub(crate) fn env_lock() -> std::sync::MutexGuard<'static, ()> {
    // CLMC_WORKERS is process-global; tests that read or write it hold
    // this lock so they cannot interleave.
    static LOCK: std::sync::Mutex<()> = std::sync::Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}
