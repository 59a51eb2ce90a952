//! Experiment configuration: JSON-loadable description of one run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calibration::{EstimatorMode, RateEstimates};
use crate::hierarchy::HierarchyModel;
use crate::level_law::LevelLaw;
use crate::pde::{Pde1dConfig, Pde1dModel};
use crate::synthetic::{SyntheticModel, SyntheticParams};

use super::HarnessError;

/// Work-unit budget per synthetic sample; levels whose step cost would
/// exceed it are unreachable on this machine.
const SYNTHETIC_COST_CAP: f64 = 1e12;

/// Which hierarchy the experiment samples from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Synthetic {
        #[serde(flatten)]
        params: SyntheticParams,
    },
    Pde1d {
        #[serde(flatten)]
        config: Pde1dConfig,
    },
}

/// A constructed model with the bookkeeping the harness needs.
pub struct PreparedModel {
    pub model: Box<dyn HierarchyModel>,
    pub label: String,
    machine_limit_hint: MachineLimitHint,
}

enum MachineLimitHint {
    /// Closed-form limit from the synthetic cost law.
    Fixed(f64),
    /// Element cap translated through fitted cost rates when available.
    FromRates { cap_cost: f64 },
}

impl PreparedModel {
    /// Deepest level this machine can afford. For rate-translated limits
    /// the fitted cost law is required; without it the model's internal
    /// cap is the only guard.
    pub fn machine_limit(&self, rates: Option<&RateEstimates>) -> f64 {
        match &self.machine_limit_hint {
            MachineLimitHint::Fixed(limit) => *limit,
            MachineLimitHint::FromRates { cap_cost } => match rates {
                Some(r) if r.gamma > 0.0 && r.c3 > 0.0 => (cap_cost / r.c3).ln() / r.gamma,
                _ => f64::INFINITY,
            },
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<PreparedModel, HarnessError> {
        match self {
            ModelConfig::Synthetic { params } => {
                let model = SyntheticModel::new(*params)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                let limit = (SYNTHETIC_COST_CAP / params.c3).ln() / params.gamma;
                Ok(PreparedModel {
                    model: Box::new(model),
                    label: "synthetic".into(),
                    machine_limit_hint: MachineLimitHint::Fixed(limit),
                })
            }
            ModelConfig::Pde1d { config } => {
                let cap_cost = 2.0 * (config.element_cap as f64 - 1.0);
                let model =
                    Pde1dModel::new(config.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
                Ok(PreparedModel {
                    model: Box::new(model),
                    label: "pde1d".into(),
                    machine_limit_hint: MachineLimitHint::FromRates { cap_cost },
                })
            }
        }
    }
}

/// Explicitly chosen estimator parameters, bypassing calibration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplicitParams {
    /// Exponential stopping rate; omit when `law` is given in the config.
    #[serde(default)]
    pub r: Option<f64>,
    /// Number of main-run samples.
    pub n: usize,
    /// Truncation level; required in biased mode, forbidden in unbiased.
    #[serde(default)]
    pub l_max: Option<f64>,
}

fn default_pilot_size() -> usize {
    6400
}
fn default_pilot_target_level() -> f64 {
    5.0
}
fn default_bin_width() -> f64 {
    0.5
}
fn default_workers() -> usize {
    1
}
fn default_feasibility_margin() -> f64 {
    0.05
}
fn default_max_samples() -> usize {
    1_000_000
}

/// Everything one experiment needs, loadable from a JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Stopping-level law override for explicit-parameter runs. Tolerance
    /// driven runs always use the exponential law with the selected rate.
    #[serde(default)]
    pub law: Option<LevelLaw>,
    pub mode: EstimatorMode,
    /// Target tolerance; mutually exclusive with `explicit`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub explicit: Option<ExplicitParams>,
    #[serde(default = "default_pilot_size")]
    pub pilot_size: usize,
    /// Fixed refinement depth of calibration pilot paths.
    #[serde(default = "default_pilot_target_level")]
    pub pilot_target_level: f64,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Minimum excess of the variance-decay rate over the cost-growth
    /// rate for an unbiased run to be allowed.
    #[serde(default = "default_feasibility_margin")]
    pub feasibility_margin: f64,
    /// Hard cap on the main-run sample count; selection clamps to it with
    /// a warning.
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig, HarnessError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        ExperimentConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.pilot_size < 100 {
            return Err(HarnessError::Config(format!(
                "pilot size must be at least 100, got {}",
                self.pilot_size
            )));
        }
        if !(self.pilot_target_level > 0.0 && self.pilot_target_level.is_finite()) {
            return Err(HarnessError::Config(format!(
                "pilot target level must be positive, got {}",
                self.pilot_target_level
            )));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(HarnessError::Config(format!(
                "bin width must be positive, got {}",
                self.bin_width
            )));
        }
        if self.workers == 0 {
            return Err(HarnessError::Config("worker count must be positive".into()));
        }
        if !(self.feasibility_margin >= 0.0) {
            return Err(HarnessError::Config(format!(
                "feasibility margin must be non-negative, got {}",
                self.feasibility_margin
            )));
        }
        if self.max_samples < 2 {
            return Err(HarnessError::Config(
                "sample cap must allow at least 2 samples".into(),
            ));
        }
        if self.epsilon.is_some() && self.explicit.is_some() {
            return Err(HarnessError::Config(
                "tolerance-driven and explicit parameters are mutually exclusive; \
                 give epsilon or explicit, not both"
                    .into(),
            ));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "epsilon must be positive, got {eps}"
                )));
            }
        }
        if let Some(law) = &self.law {
            law.validate()?;
            if self.epsilon.is_some() {
                return Err(HarnessError::Config(
                    "a law override requires explicit parameters; tolerance-driven \
                     runs construct their law from the selected rate"
                        .into(),
                ));
            }
        }
        if let Some(explicit) = &self.explicit {
            if explicit.n < 2 {
                return Err(HarnessError::Config(format!(
                    "explicit sample count must be at least 2, got {}",
                    explicit.n
                )));
            }
            match (&explicit.r, &self.law) {
                (Some(_), Some(_)) => {
                    return Err(HarnessError::Config(
                        "give either an explicit rate or a law override, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(HarnessError::Config(
                        "explicit parameters need a rate (or a law override)".into(),
                    ))
                }
                (Some(r), None) if !(*r > 0.0 && r.is_finite()) => {
                    return Err(HarnessError::Config(format!(
                        "explicit rate must be positive, got {r}"
                    )));
                }
                _ => {}
            }
            match (self.mode, explicit.l_max) {
                (EstimatorMode::Biased, None) => {
                    return Err(HarnessError::Config(
                        "biased mode with explicit parameters needs l_max".into(),
                    ))
                }
                (EstimatorMode::Unbiased, Some(_)) => {
                    return Err(HarnessError::Config(
                        "unbiased mode cannot take a truncation level".into(),
                    ))
                }
                (EstimatorMode::Biased, Some(l)) if !(l > 0.0 && l.is_finite()) => {
                    return Err(HarnessError::Config(format!(
                        "truncation level must be positive, got {l}"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
