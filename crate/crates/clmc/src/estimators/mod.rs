//! Continuous-level estimators built from weighted path increments.
//!
//! The central quantity is the per-sample contribution
//! `Y = sum_j w_j (Q_j - Q_{j-1})` where each interval weight averages the
//! reciprocal survival of the stopping-level law over the interval, clipped
//! at the sample's effective stopping level. Aggregation across samples is
//! single-threaded, ordered by sample index, and compensated, so results do
//! not depend on how path construction was parallelized.

mod mlmc;
mod polynomial;
mod stencil;

pub use mlmc::{mlmc_estimate, rhee_glynn_estimate, MlmcInput};
pub use polynomial::{fit_piecewise_polynomial, polynomial_contribution, PiecewisePolynomial};
pub use stencil::{
    boundary_end_correction, boundary_start_correction, five_point_stencil_estimate,
    mlmc_difference, stencil_slope, StencilConfig,
};

use thiserror::Error;

use crate::hierarchy::SamplePath;
use crate::level_law::{LawError, LevelLaw};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("interval is degenerate: [{0}, {1}]")]
    DegenerateInterval(f64, f64),
    #[error("clipped level {tilde} outside interval [{prev}, {next}]")]
    ClippedLevelOutsideInterval { prev: f64, next: f64, tilde: f64 },
    #[error("rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("law error: {0}")]
    Law(#[from] LawError),
    #[error("path {sample_index} is inconsistent with the law: {reason}")]
    LawPathMismatch { sample_index: u64, reason: String },
    #[error("estimator supports only {expected} laws, got {got}")]
    UnsupportedLaw {
        expected: &'static str,
        got: &'static str,
    },
    #[error("{0}")]
    Contract(String),
}

/// Neumaier-compensated sum over a fixed iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Clip a path level at the sample's effective stopping level
/// `min(stopping, truncation)`.
pub fn truncated_level(level: f64, stopping_level: f64, truncation_level: Option<f64>) -> f64 {
    let bound = match truncation_level {
        Some(t) => stopping_level.min(t),
        None => stopping_level,
    };
    level.min(bound)
}

/// Weight of one refinement interval under an exponential stopping law:
/// the reciprocal-survival integral over `[l_prev, l_tilde]` averaged over
/// the full interval width,
/// `(exp(rate * l_tilde) - exp(rate * l_prev)) / (rate * (l_next - l_prev))`.
pub fn interval_weight(
    rate: f64,
    l_prev: f64,
    l_next: f64,
    l_tilde: f64,
) -> Result<f64, EstimatorError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(EstimatorError::NonPositiveRate(rate));
    }
    if !(l_next > l_prev) {
        return Err(EstimatorError::DegenerateInterval(l_prev, l_next));
    }
    if !(l_prev <= l_tilde && l_tilde <= l_next) {
        return Err(EstimatorError::ClippedLevelOutsideInterval {
            prev: l_prev,
            next: l_next,
            tilde: l_tilde,
        });
    }
    // exp(r*l_prev) * expm1(r*(l_tilde - l_prev)) keeps the difference of
    // exponentials accurate when the clipped sub-interval is short.
    Ok((rate * l_prev).exp() * (rate * (l_tilde - l_prev)).exp_m1() / (rate * (l_next - l_prev)))
}

/// Per-sample contribution `Y = sum_j w_j (Q_j - Q_{j-1})` for a general
/// stopping-level law.
pub fn sample_contribution(path: &SamplePath, law: &LevelLaw) -> Result<f64, EstimatorError> {
    let target = path.target_level();
    let last = *path.levels.last().expect("paths are never empty");
    if last < target {
        return Err(EstimatorError::LawPathMismatch {
            sample_index: path.sample_index,
            reason: format!("last level {last} below effective stopping level {target}"),
        });
    }
    let mut y = 0.0;
    for j in 1..path.levels.len() {
        let l_prev = path.levels[j - 1];
        let l_next = path.levels[j];
        let l_tilde = truncated_level(l_next, path.stopping_level, path.truncation_level);
        if l_tilde <= l_prev {
            // The effective stopping level does not reach this interval;
            // by construction only possible past a flat extension.
            continue;
        }
        let integral = law
            .reciprocal_survival_integral(l_prev, l_tilde)
            .map_err(|e| match e {
                LawError::ZeroSurvival => EstimatorError::LawPathMismatch {
                    sample_index: path.sample_index,
                    reason: "path stops beyond the law's support".into(),
                },
                other => EstimatorError::Law(other),
            })?;
        let weight = integral / (l_next - l_prev);
        y += weight * (path.values[j] - path.values[j - 1]);
    }
    Ok(y)
}

/// Unbiased variance of the sample mean:
/// `sum (y - mean)^2 / (n (n - 1))`, compensated, in input order.
pub fn estimator_variance(contributions: &[f64]) -> Result<f64, EstimatorError> {
    let n = contributions.len();
    if n < 2 {
        return Err(EstimatorError::InsufficientSamples { needed: 2, got: n });
    }
    let mean = compensated_sum(contributions.iter().copied()) / n as f64;
    let ss = compensated_sum(contributions.iter().map(|y| (y - mean) * (y - mean)));
    Ok(ss / (n as f64 * (n - 1) as f64))
}

/// Aggregated estimate with its diagnostics.
#[derive(Clone, Debug)]
pub struct EstimateResult {
    /// Mean of the per-sample contributions: estimates the expected value
    /// gain from level 0 to the stopping level.
    pub increment_estimate: f64,
    /// Mean of the level-0 values.
    pub base_estimate: f64,
    /// `base_estimate + increment_estimate`.
    pub total_estimate: f64,
    /// Per-sample contributions in sample-index order. May be empty for
    /// estimators without aligned per-sample contributions.
    pub contributions: Vec<f64>,
    /// Variance of the increment estimator (variance of the mean).
    pub variance_estimate: f64,
    /// `sqrt(variance_estimate)`.
    pub standard_error: f64,
    /// Total work units across all samples.
    pub total_cost: f64,
    pub sample_count: usize,
}

/// One sample reduced to the numbers aggregation needs.
#[derive(Clone, Copy, Debug)]
pub struct SampleTerms {
    pub sample_index: u64,
    pub contribution: f64,
    pub base_value: f64,
    pub cost: f64,
}

/// Compute a sample's aggregation terms under a law.
pub fn sample_terms(path: &SamplePath, law: &LevelLaw) -> Result<SampleTerms, EstimatorError> {
    Ok(SampleTerms {
        sample_index: path.sample_index,
        contribution: sample_contribution(path, law)?,
        base_value: path.values[0],
        cost: path.total_cost(),
    })
}

/// Aggregate per-sample terms into an estimate. Terms are sorted by sample
/// index first so the reduction order never depends on scheduling.
pub fn aggregate_terms(mut terms: Vec<SampleTerms>) -> Result<EstimateResult, EstimatorError> {
    let n = terms.len();
    if n < 2 {
        return Err(EstimatorError::InsufficientSamples { needed: 2, got: n });
    }
    terms.sort_by_key(|t| t.sample_index);
    let contributions: Vec<f64> = terms.iter().map(|t| t.contribution).collect();
    let increment = compensated_sum(contributions.iter().copied()) / n as f64;
    let base = compensated_sum(terms.iter().map(|t| t.base_value)) / n as f64;
    let variance = estimator_variance(&contributions)?;
    let cost = compensated_sum(terms.iter().map(|t| t.cost));
    Ok(EstimateResult {
        increment_estimate: increment,
        base_estimate: base,
        total_estimate: base + increment,
        contributions,
        variance_estimate: variance,
        standard_error: variance.sqrt(),
        total_cost: cost,
        sample_count: n,
    })
}

/// Per-sample totals `Q_0 + Y` in sample-index order: the values whose mean
/// is `total_estimate`. Their spread, not the spread of the increments alone,
/// is what bounds the error of the combined estimator when the base level is
/// noisy.
pub fn total_sample_values(
    paths: &[SamplePath],
    law: &LevelLaw,
) -> Result<Vec<f64>, EstimatorError> {
    let mut terms = paths
        .iter()
        .map(|p| sample_terms(p, law))
        .collect::<Result<Vec<_>, _>>()?;
    terms.sort_by_key(|t| t.sample_index);
    Ok(terms.iter().map(|t| t.base_value + t.contribution).collect())
}

/// Continuous-level Monte Carlo estimate over a batch of paths.
pub fn clmc_estimate(
    paths: &[SamplePath],
    law: &LevelLaw,
) -> Result<EstimateResult, EstimatorError> {
    law.validate()?;
    let terms = paths
        .iter()
        .map(|p| sample_terms(p, law))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_terms(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::SamplePath;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_path(values: &[f64], stopping: f64) -> SamplePath {
        let n = values.len();
        SamplePath {
            sample_index: 0,
            levels: (0..n).map(|j| j as f64).collect(),
            values: values.to_vec(),
            step_costs: vec![1.0; n],
            stopping_level: stopping,
            truncation_level: None,
            machine_truncated: false,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn weight_matches_hand_values() {
        // Full unit interval at rate 1: e - 1.
        let w = interval_weight(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(w, std::f64::consts::E - 1.0, max_relative = 1e-14);
        // Rate log 2: (2 - 1) / log 2.
        let w = interval_weight(2f64.ln(), 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(w, 1.0 / 2f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn weight_is_zero_when_clip_hits_interval_start() {
        let w = interval_weight(1.3, 2.0, 3.0, 2.0).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn weight_rejects_bad_inputs() {
        assert!(matches!(
            interval_weight(1.0, 1.0, 1.0, 1.0),
            Err(EstimatorError::DegenerateInterval(_, _))
        ));
        assert!(matches!(
            interval_weight(1.0, 0.0, 1.0, 1.5),
            Err(EstimatorError::ClippedLevelOutsideInterval { .. })
        ));
        assert!(matches!(
            interval_weight(0.0, 0.0, 1.0, 0.5),
            Err(EstimatorError::NonPositiveRate(_))
        ));
    }

    /// Adaptive Simpson integration, used as an independent oracle for the
    /// closed-form weight. `tol` is relative to the first whole-interval
    /// estimate so that steep exponentials terminate.
    fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
        }
        fn recurse(
            f: &impl Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            whole: f64,
            fm: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (left, flm) = simpson(f, a, fa, m, fm);
            let (right, frm) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                recurse(f, a, fa, m, fm, left, flm, tol / 2.0, depth - 1)
                    + recurse(f, m, fm, b, fb, right, frm, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let (whole, fm) = simpson(f, a, fa, b, fb);
        let abs_tol = tol * whole.abs().max(f64::MIN_POSITIVE);
        recurse(f, a, fa, b, fb, whole, fm, abs_tol, 40)
    }

    #[test]
    fn weight_agrees_with_quadrature_oracle() {
        let rate = 0.73;
        let (a, b, t) = (1.2, 2.7, 2.1);
        let integral = adaptive_simpson(&|l: f64| (rate * l).exp(), a, t, 1e-13);
        let expected = integral / (b - a);
        let got = interval_weight(rate, a, b, t).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-11);
    }

    #[test]
    fn truncated_level_takes_minimum() {
        assert_eq!(truncated_level(3.0, 2.5, None), 2.5);
        assert_eq!(truncated_level(3.0, 5.0, Some(4.0)), 3.0);
        assert_eq!(truncated_level(3.0, 5.0, Some(2.0)), 2.0);
    }

    #[test]
    fn variance_matches_hand_values() {
        assert_relative_eq!(estimator_variance(&[0.0, 2.0]).unwrap(), 1.0);
        assert_relative_eq!(
            estimator_variance(&[1.0, 2.0, 3.0]).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-15
        );
        assert!(matches!(
            estimator_variance(&[1.0]),
            Err(EstimatorError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn variance_is_translation_invariant_under_compensation() {
        let base = [0.1, 0.4, -0.3, 0.25, -0.05];
        let offset = 1.0e9;
        let shifted: Vec<f64> = base.iter().map(|y| y + offset).collect();
        let v0 = estimator_variance(&base).unwrap();
        let v1 = estimator_variance(&shifted).unwrap();
        assert_relative_eq!(v0, v1, max_relative = 1e-6);
    }

    #[test]
    fn two_sample_estimate_matches_hand_values() {
        // Contributions 0 and 2: estimate 1, variance 1.
        let p0 = unit_path(&[0.0, 0.0], 0.5);
        let mut p1 = unit_path(&[0.0, 0.0], 0.5);
        p1.sample_index = 1;
        // Choose the second value so its weighted increment is exactly 2.
        let w = interval_weight(1.0, 0.0, 1.0, 0.5).unwrap();
        p1.values[1] = 2.0 / w;
        let law = LevelLaw::Exponential { rate: 1.0 };
        let result = clmc_estimate(&[p0, p1], &law).unwrap();
        assert_relative_eq!(result.increment_estimate, 1.0, max_relative = 1e-13);
        assert_relative_eq!(result.variance_estimate, 1.0, max_relative = 1e-13);
        assert_relative_eq!(result.standard_error, 1.0, max_relative = 1e-13);
        assert_eq!(result.sample_count, 2);
        assert_relative_eq!(result.total_cost, 4.0);
    }

    #[test]
    fn aggregation_orders_by_sample_index() {
        let mut p0 = unit_path(&[0.0, 1.0], 0.5);
        p0.sample_index = 7;
        let mut p1 = unit_path(&[0.0, 2.0], 0.5);
        p1.sample_index = 3;
        let law = LevelLaw::Exponential { rate: 1.0 };
        let a = clmc_estimate(&[p0.clone(), p1.clone()], &law).unwrap();
        let b = clmc_estimate(&[p1, p0], &law).unwrap();
        assert_eq!(a.contributions, b.contributions);
        assert_eq!(a.increment_estimate.to_bits(), b.increment_estimate.to_bits());
    }

    #[test]
    fn discrete_law_contribution_reduces_to_reciprocal_survival() {
        let law = LevelLaw::Geometric { rate: 0.5 };
        let mut path = unit_path(&[0.0, 1.0, 3.0], 2.0);
        path.truncation_level = None;
        let y = sample_contribution(&path, &law).unwrap();
        // Weights 1/P(L>=1) = 2 and 1/P(L>=2) = 4.
        assert_relative_eq!(y, 2.0 * 1.0 + 4.0 * 2.0, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn weight_quadrature_equivalence_property(
            rate in 0.02f64..4.0,
            a in 0.0f64..12.0,
            width in 0.05f64..3.0,
            clip in 0.0f64..1.0,
        ) {
            let b = a + width;
            let t = a + clip * width;
            let integral = adaptive_simpson(&|l: f64| (rate * l).exp(), a, t, 1e-13);
            let expected = integral / width;
            let got = interval_weight(rate, a, b, t).unwrap();
            prop_assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1e-12));
        }

        #[test]
        fn contribution_is_linear_in_values(scale in 0.1f64..10.0) {
            let law = LevelLaw::Exponential { rate: 1.1 };
            let base = unit_path(&[0.0, 0.7, 1.1, 1.2], 2.4);
            let scaled = SamplePath {
                values: base.values.iter().map(|v| v * scale).collect(),
                ..base.clone()
            };
            let y0 = sample_contribution(&base, &law).unwrap();
            let y1 = sample_contribution(&scaled, &law).unwrap();
            prop_assert!((y1 - scale * y0).abs() <= 1e-11 * y1.abs().max(1.0));
        }
    }
}
