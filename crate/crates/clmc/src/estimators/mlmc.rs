//! Discrete multilevel baselines: the telescoping-sum estimator over fixed
//! integer levels and the randomized single-term form on a uniform grid.
//!
//! Both exist as independent references for the continuous-level estimator:
//! the telescoping form for fixed level budgets, the randomized form for
//! discrete stopping laws, where the continuous weights collapse to
//! reciprocal survival probabilities.

use super::{
    aggregate_terms, compensated_sum, estimator_variance, EstimateResult, EstimatorError,
    SampleTerms,
};
use crate::hierarchy::SamplePath;
use crate::level_law::LevelLaw;

/// Input for the telescoping multilevel estimator: independent value samples
/// at level 0 and independent (fine, coarse) pairs per increment level.
#[derive(Clone, Debug, Default)]
pub struct MlmcInput {
    pub base: Vec<f64>,
    /// `increments[l]` holds (Q_{l+1}, Q_l) pairs for increment level l+1.
    pub increments: Vec<Vec<(f64, f64)>>,
}

/// Telescoping multilevel estimate: mean of the base samples plus the sum of
/// per-level mean differences. The variance estimate sums the per-level
/// variances of the increment means (the base level is reported separately
/// through `base_estimate` and not folded into the increment variance).
/// Costs are not tracked for this input form; `total_cost` is 0.
pub fn mlmc_estimate(input: &MlmcInput) -> Result<EstimateResult, EstimatorError> {
    if input.base.len() < 2 {
        return Err(EstimatorError::InsufficientSamples {
            needed: 2,
            got: input.base.len(),
        });
    }
    for (l, pairs) in input.increments.iter().enumerate() {
        if pairs.len() < 2 {
            return Err(EstimatorError::Contract(format!(
                "increment level {}: need at least 2 pairs, got {}",
                l + 1,
                pairs.len()
            )));
        }
    }
    let base = compensated_sum(input.base.iter().copied()) / input.base.len() as f64;
    let mut increment = 0.0;
    let mut variance = 0.0;
    for pairs in &input.increments {
        let diffs: Vec<f64> = pairs.iter().map(|&(fine, coarse)| fine - coarse).collect();
        increment += compensated_sum(diffs.iter().copied()) / diffs.len() as f64;
        variance += estimator_variance(&diffs)?;
    }
    Ok(EstimateResult {
        increment_estimate: increment,
        base_estimate: base,
        total_estimate: base + increment,
        contributions: Vec::new(),
        variance_estimate: variance,
        standard_error: variance.sqrt(),
        total_cost: 0.0,
        sample_count: input.base.len(),
    })
}

/// Randomized single-sample multilevel estimate on a uniform integer grid:
/// each path contributes `sum_j (Q_j - Q_{j-1}) / P(L >= j)`.
///
/// Requires integer path levels (`levels[j] == j`) and a discrete stopping
/// law; under those conditions it coincides with the continuous-level
/// estimator because each interval weight integrates a constant reciprocal
/// survival over a unit cell.
pub fn rhee_glynn_estimate(
    paths: &[SamplePath],
    law: &LevelLaw,
) -> Result<EstimateResult, EstimatorError> {
    law.validate()?;
    if !law.is_discrete() {
        return Err(EstimatorError::UnsupportedLaw {
            expected: "discrete",
            got: "exponential",
        });
    }
    let mut terms = Vec::with_capacity(paths.len());
    for path in paths {
        for (j, &level) in path.levels.iter().enumerate() {
            if level != j as f64 {
                return Err(EstimatorError::Contract(format!(
                    "sample {}: expected unit integer grid, level[{j}] = {level}",
                    path.sample_index
                )));
            }
        }
        let target = path.target_level();
        let mut y = 0.0;
        for j in 1..path.levels.len() {
            if path.levels[j] > target {
                break;
            }
            let survival = law.survival(path.levels[j]);
            if survival <= 0.0 {
                return Err(EstimatorError::LawPathMismatch {
                    sample_index: path.sample_index,
                    reason: "path stops beyond the law's support".into(),
                });
            }
            y += (path.values[j] - path.values[j - 1]) / survival;
        }
        terms.push(SampleTerms {
            sample_index: path.sample_index,
            contribution: y,
            base_value: path.values[0],
            cost: path.total_cost(),
        });
    }
    aggregate_terms(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::clmc_estimate;
    use crate::hierarchy::{build_path, HierarchyModel, Refinement};
    use crate::level_law::LevelLaw;
    use crate::rng::{stream, StreamRole};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn telescoping_identity_is_exact() {
        // Deterministic telescoping data: base 1.0, increments +0.5, -0.25.
        let input = MlmcInput {
            base: vec![1.0, 1.0],
            increments: vec![
                vec![(1.5, 1.0), (1.5, 1.0)],
                vec![(1.25, 1.5), (1.25, 1.5)],
            ],
        };
        let result = mlmc_estimate(&input).unwrap();
        assert_eq!(result.base_estimate, 1.0);
        assert_relative_eq!(result.increment_estimate, 0.25, max_relative = 1e-15);
        assert_relative_eq!(result.total_estimate, 1.25, max_relative = 1e-15);
        assert_eq!(result.variance_estimate, 0.0);
    }

    #[test]
    fn undersized_levels_are_rejected() {
        let input = MlmcInput {
            base: vec![1.0, 2.0],
            increments: vec![vec![(1.0, 0.5)]],
        };
        assert!(mlmc_estimate(&input).is_err());
        let input = MlmcInput {
            base: vec![1.0],
            increments: vec![],
        };
        assert!(mlmc_estimate(&input).is_err());
    }

    /// Random-walk model on the unit integer grid.
    struct WalkModel;

    impl HierarchyModel for WalkModel {
        fn refine_sample(
            &self,
            sample_index: u64,
            seed: u64,
            target: f64,
        ) -> Result<Refinement, crate::hierarchy::PathError> {
            let mut rng = stream(seed, sample_index, StreamRole::Model);
            let mut levels = vec![0.0];
            let mut values = vec![rng.random::<f64>()];
            let mut costs = vec![1.0];
            let mut j = 0u32;
            while *levels.last().unwrap() < target {
                j += 1;
                let z: f64 = StandardNormal.sample(&mut rng);
                levels.push(f64::from(j));
                values.push(values[(j - 1) as usize] + z * 0.5f64.powi(j as i32));
                costs.push(f64::from(j));
            }
            Ok(Refinement {
                levels,
                values,
                step_costs: costs,
                capped: false,
            })
        }
    }

    #[test]
    fn randomized_form_equals_continuous_estimator_on_discrete_laws() {
        let law = LevelLaw::Geometric { rate: 0.5 };
        let paths: Vec<_> = (0..1000)
            .map(|k| build_path(&WalkModel, k, 99, &law, None, f64::INFINITY).unwrap())
            .collect();
        let randomized = rhee_glynn_estimate(&paths, &law).unwrap();
        let continuous = clmc_estimate(&paths, &law).unwrap();
        assert_relative_eq!(
            randomized.increment_estimate,
            continuous.increment_estimate,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            randomized.total_estimate,
            continuous.total_estimate,
            max_relative = 1e-14
        );
        for (a, b) in randomized
            .contributions
            .iter()
            .zip(continuous.contributions.iter())
        {
            assert_relative_eq!(a, b, max_relative = 1e-14, epsilon = 1e-300);
        }
    }

    #[test]
    fn continuous_law_is_rejected_for_randomized_form() {
        let law = LevelLaw::Exponential { rate: 1.0 };
        assert!(matches!(
            rhee_glynn_estimate(&[], &law),
            Err(EstimatorError::UnsupportedLaw { .. })
        ));
    }

    #[test]
    fn non_integer_grid_is_rejected() {
        let law = LevelLaw::Geometric { rate: 0.5 };
        let path = SamplePath {
            sample_index: 0,
            levels: vec![0.0, 0.5],
            values: vec![0.0, 1.0],
            step_costs: vec![0.0, 0.0],
            stopping_level: 0.4,
            truncation_level: None,
            machine_truncated: false,
            wall_seconds: 0.0,
        };
        assert!(matches!(
            rhee_glynn_estimate(&[path], &law),
            Err(EstimatorError::Contract(_))
        ));
    }
}
