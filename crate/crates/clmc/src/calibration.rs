//! Rate calibration from pilot paths and tolerance-driven parameter selection.
//!
//! Pilot paths are reduced to per-level-bin statistics of the piecewise
//! slopes (Q_j - Q_{j-1})/(l_j - l_{j-1}). Log-linear fits of the bin mean,
//! bin variance, and bin cost against the bin center estimate the decay
//! rates alpha (mean), beta (variance), and the cost growth rate gamma,
//! with multiplicative constants c1, c2, c3. Those rates then drive the
//! choice of the exponential stopping rate, the truncation level, and the
//! sample count for a requested root-mean-square tolerance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{PathError, SamplePath};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least 2 paths to bin level statistics, got {0}")]
    TooFewPaths(usize),
    #[error("bin width must be positive and finite, got {0}")]
    BadBinWidth(f64),
    #[error("{fit} fit needs at least {needed} usable bins, got {got}")]
    TooFewBins {
        fit: &'static str,
        needed: usize,
        got: usize,
    },
    #[error(
        "{fit} fit produced a non-positive rate {rate}; the data does not \
         follow the assumed exponential form"
    )]
    NonPositiveRate { fit: &'static str, rate: f64 },
    #[error("tolerance must lie in (0, 1/e), got {0}")]
    EpsilonOutOfRange(f64),
    #[error(
        "unbounded mode is infeasible: variance decay {beta} does not exceed \
         cost growth {gamma} by more than the margin {margin}, so the run \
         would have infinite mean squared error or infinite cost"
    )]
    Infeasible { beta: f64, gamma: f64, margin: f64 },
    #[error("pilot variance must be positive and finite, got {0}")]
    BadPilotVariance(f64),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Statistics of the path slopes whose interval midpoint landed in one bin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelBin {
    pub index: u64,
    /// Center of the covering interval [index*w, (index+1)*w).
    pub center: f64,
    pub count: usize,
    pub slope_mean: f64,
    /// Unbiased sample variance of the slopes; absent when count < 2.
    pub slope_variance: Option<f64>,
    /// Mean of step_cost / level gain over the bin's intervals.
    pub cost_per_level: f64,
    /// Fewer than 5 entries landed here.
    pub low_confidence: bool,
}

/// Bin the piecewise slopes and per-unit-level costs of `paths`.
///
/// Each interval (l_{j-1}, l_j] contributes its slope and its
/// cost/(l_j - l_{j-1}) to the bin containing the interval midpoint.
/// Zero-cost intervals of machine-truncated paths are flat extensions
/// carrying no model information and are skipped.
pub fn bin_level_statistics(
    paths: &[SamplePath],
    bin_width: f64,
) -> Result<Vec<LevelBin>, CalibrationError> {
    if paths.len() < 2 {
        return Err(CalibrationError::TooFewPaths(paths.len()));
    }
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(CalibrationError::BadBinWidth(bin_width));
    }
    let mut entries: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for path in paths {
        path.validate()?;
        for j in 1..path.levels.len() {
            if path.machine_truncated && path.step_costs[j] == 0.0 {
                continue;
            }
            let gain = path.levels[j] - path.levels[j - 1];
            let mid = 0.5 * (path.levels[j] + path.levels[j - 1]);
            let (slopes, costs) = entries.entry((mid / bin_width) as u64).or_default();
            slopes.push((path.values[j] - path.values[j - 1]) / gain);
            costs.push(path.step_costs[j] / gain);
        }
    }
    let bins = entries
        .into_iter()
        .map(|(index, (slopes, costs))| {
            let count = slopes.len();
            let slope_mean = slopes.iter().sum::<f64>() / count as f64;
            let slope_variance = (count >= 2).then(|| {
                slopes.iter().map(|s| (s - slope_mean).powi(2)).sum::<f64>() / (count - 1) as f64
            });
            LevelBin {
                index,
                center: (index as f64 + 0.5) * bin_width,
                count,
                slope_mean,
                slope_variance,
                cost_per_level: costs.iter().sum::<f64>() / count as f64,
                low_confidence: count < 5,
            }
        })
        .collect();
    Ok(bins)
}

/// Weighted residual sums of squares of the three log-linear fits.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct FitResiduals {
    pub mean: f64,
    pub variance: f64,
    pub cost: f64,
}

/// Fitted exponential rates with their constants and fit diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateEstimates {
    /// Mean slope decays like c1 e^{-alpha l}.
    pub alpha: f64,
    /// Slope variance decays like c2 e^{-beta l}.
    pub beta: f64,
    /// Cost per unit level grows like c3 e^{gamma l}.
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub bins: Vec<LevelBin>,
    pub residuals: FitResiduals,
    pub warnings: Vec<String>,
}

impl RateEstimates {
    /// Bare estimates without diagnostics, for callers that know the rates.
    pub fn from_rates(alpha: f64, beta: f64, gamma: f64, c1: f64, c2: f64, c3: f64) -> Self {
        RateEstimates {
            alpha,
            beta,
            gamma,
            c1,
            c2,
            c3,
            bins: Vec::new(),
            residuals: FitResiduals::default(),
            warnings: Vec::new(),
        }
    }
}

struct LineFit {
    slope: f64,
    intercept: f64,
    rss: f64,
}

/// Weighted least squares of y against x over (x, y, weight) triples.
fn weighted_line_fit(points: &[(f64, f64, f64)]) -> LineFit {
    let weight_sum: f64 = points.iter().map(|p| p.2).sum();
    let x_bar = points.iter().map(|p| p.2 * p.0).sum::<f64>() / weight_sum;
    let y_bar = points.iter().map(|p| p.2 * p.1).sum::<f64>() / weight_sum;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - x_bar).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| p.2 * (p.0 - x_bar) * (p.1 - y_bar))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let rss = points
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    LineFit {
        slope,
        intercept,
        rss,
    }
}

/// Fit the three exponential laws to binned statistics.
///
/// The mean fit regresses log|slope mean|, the variance fit log(slope
/// variance), the cost fit log(cost per level), each against the bin
/// center with weights proportional to bin counts. Bins unusable for one
/// fit (zero mean, missing or non-positive variance, non-positive cost)
/// are excluded from that fit with a warning.
pub fn fit_rates(bins: &[LevelBin]) -> Result<RateEstimates, CalibrationError> {
    let mut warnings = Vec::new();
    let mut mean_points = Vec::new();
    let mut variance_points = Vec::new();
    let mut cost_points = Vec::new();
    for bin in bins {
        if bin.count == 0 {
            continue;
        }
        let weight = bin.count as f64;
        if bin.slope_mean == 0.0 {
            warnings.push(format!(
                "bin {} has zero mean slope; excluded from the mean-decay fit",
                bin.index
            ));
        } else {
            mean_points.push((bin.center, bin.slope_mean.abs().ln(), weight));
        }
        match bin.slope_variance {
            Some(v) if v > 0.0 => variance_points.push((bin.center, v.ln(), weight)),
            _ => warnings.push(format!(
                "bin {} has no positive slope variance; excluded from the variance-decay fit",
                bin.index
            )),
        }
        if bin.cost_per_level > 0.0 {
            cost_points.push((bin.center, bin.cost_per_level.ln(), weight));
        } else {
            warnings.push(format!(
                "bin {} has non-positive cost; excluded from the cost-growth fit",
                bin.index
            ));
        }
    }
    for (fit, points) in [
        ("mean-decay", &mean_points),
        ("variance-decay", &variance_points),
        ("cost-growth", &cost_points),
    ] {
        if points.len() < 3 {
            return Err(CalibrationError::TooFewBins {
                fit,
                needed: 3,
                got: points.len(),
            });
        }
    }
    let mean_fit = weighted_line_fit(&mean_points);
    let variance_fit = weighted_line_fit(&variance_points);
    let cost_fit = weighted_line_fit(&cost_points);
    let alpha = -mean_fit.slope;
    let beta = -variance_fit.slope;
    let gamma = cost_fit.slope;
    for (fit, rate) in [
        ("mean-decay", alpha),
        ("variance-decay", beta),
        ("cost-growth", gamma),
    ] {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(CalibrationError::NonPositiveRate { fit, rate });
        }
    }
    if beta > 2.0 * alpha {
        warnings.push(format!(
            "variance decay beta={beta} exceeds twice the mean decay alpha={alpha}; \
             the complexity guarantees assume beta <= 2 alpha"
        ));
    }
    Ok(RateEstimates {
        alpha,
        beta,
        gamma,
        c1: mean_fit.intercept.exp(),
        c2: variance_fit.intercept.exp(),
        c3: cost_fit.intercept.exp(),
        bins: bins.to_vec(),
        residuals: FitResiduals {
            mean: mean_fit.rss,
            variance: variance_fit.rss,
            cost: cost_fit.rss,
        },
        warnings,
    })
}

/// Pick the exponential stopping rate from the variance and cost rates.
///
/// The midpoint (beta + gamma)/2 balances variance decay against cost
/// growth. When the two rates are closer than 0.1 the midpoint would sit
/// essentially on both, which costs a logarithmic factor; the variance
/// rate is used and a warning returned.
pub fn select_rate(beta: f64, gamma: f64) -> (f64, Option<String>) {
    if (beta - gamma).abs() < 0.1 {
        (
            beta,
            Some(format!(
                "variance decay beta={beta} and cost growth gamma={gamma} differ by \
                 less than 0.1; using the variance rate and accepting a logarithmic \
                 cost factor"
            )),
        )
    } else {
        (0.5 * (beta + gamma), None)
    }
}

/// Truncation level that keeps the squared bias below half of epsilon^2.
pub fn biased_truncation_level(alpha: f64, c1: f64, rate: f64, epsilon: f64) -> f64 {
    let bound = (std::f64::consts::SQRT_2 * c1 * rate / (alpha * epsilon)).ln() / alpha;
    bound.ceil().max(1.0)
}

/// Sample count that keeps the estimator variance below half of epsilon^2.
pub fn required_samples(var_y: f64, epsilon: f64) -> usize {
    ((2.0 * var_y / (epsilon * epsilon)).ceil() as usize).max(2)
}

/// Whether the unbounded (no truncation level) mode has finite cost and
/// finite mean squared error.
#[derive(Clone, Debug, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub rationale: String,
}

/// The unbounded mode needs the variance decay to beat the cost growth.
/// The margin guards against fitted rates that are only approximate.
pub fn unbiased_feasibility(beta: f64, gamma: f64, margin: f64) -> Feasibility {
    let feasible = beta > gamma + margin;
    let rationale = if feasible {
        format!(
            "variance decay beta={beta} exceeds cost growth gamma={gamma} by more \
             than the margin {margin}; the unbounded mode has finite cost and variance"
        )
    } else {
        format!(
            "variance decay beta={beta} does not exceed cost growth gamma={gamma} by \
             more than the margin {margin}; the unbounded mode would have infinite \
             mean squared error or infinite cost"
        )
    };
    Feasibility {
        feasible,
        rationale,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Finite truncation level; bias controlled by the level choice.
    Biased,
    /// No truncation level; requires variance decay above cost growth.
    Unbiased,
}

impl std::fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorMode::Biased => write!(f, "biased"),
            EstimatorMode::Unbiased => write!(f, "unbiased"),
        }
    }
}

/// Complete run configuration produced by parameter selection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Target root-mean-square tolerance when tolerance-driven.
    pub epsilon: Option<f64>,
    /// Exponential stopping rate.
    pub rate: f64,
    /// Truncation level; absent in unbiased mode.
    pub truncation_level: Option<f64>,
    pub sample_count: usize,
    pub mode: EstimatorMode,
}

/// Assemble the full configuration for a target tolerance.
///
/// `pilot_var_y` is a pilot estimate of the per-sample contribution
/// variance under the selected rate; the sample count 2 Var(Y)/epsilon^2
/// puts the variance half of the error budget at epsilon^2/2, matching
/// the bias half controlled by the truncation level.
pub fn select_parameters(
    rates: &RateEstimates,
    epsilon: f64,
    mode: EstimatorMode,
    pilot_var_y: f64,
    margin: f64,
) -> Result<(EstimatorConfig, Vec<String>), CalibrationError> {
    if !(epsilon > 0.0 && epsilon < 1.0 / std::f64::consts::E) {
        return Err(CalibrationError::EpsilonOutOfRange(epsilon));
    }
    if !(pilot_var_y.is_finite() && pilot_var_y > 0.0) {
        return Err(CalibrationError::BadPilotVariance(pilot_var_y));
    }
    let mut warnings = Vec::new();
    let (rate, rate_warning) = select_rate(rates.beta, rates.gamma);
    warnings.extend(rate_warning);
    let truncation_level = match mode {
        EstimatorMode::Unbiased => {
            let feasibility = unbiased_feasibility(rates.beta, rates.gamma, margin);
            if !feasibility.feasible {
                return Err(CalibrationError::Infeasible {
                    beta: rates.beta,
                    gamma: rates.gamma,
                    margin,
                });
            }
            None
        }
        EstimatorMode::Biased => Some(biased_truncation_level(
            rates.alpha,
            rates.c1,
            rate,
            epsilon,
        )),
    };
    let config = EstimatorConfig {
        epsilon: Some(epsilon),
        rate,
        truncation_level,
        sample_count: required_samples(pilot_var_y, epsilon),
        mode,
    };
    Ok((config, warnings))
}
