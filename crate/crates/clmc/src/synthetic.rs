//! Synthetic refinement model with prescribed decay and cost rates.
//!
//! Levels live on a fixed grid j * step. Increments are independent
//! Gaussians whose mean and variance decay exponentially in the level and
//! whose step cost grows exponentially, so every calibration and selection
//! quantity has a closed form to test against.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{HierarchyModel, PathError, Refinement};
use crate::rng::{stream, StreamRole};

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("base noise level must be non-negative and finite, got {0}")]
    BadBaseNoise(f64),
    #[error(
        "pair process needs 0 <= covariance < variance for the common-factor \
         construction, got variance {variance}, covariance {covariance}"
    )]
    BadPairCovariance { variance: f64, covariance: f64 },
    #[error("pair process grid needs at least 2 points, got {0}")]
    PairGridTooShort(usize),
}

/// Decay/cost rates and grid geometry of the synthetic model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    /// Mean-decay rate: E[increment over (l_{j-1}, l_j]] = c1 e^{-alpha l_j} step.
    pub alpha: f64,
    /// Variance-decay rate: Var[increment] = c2 e^{-beta l_j} step^2.
    pub beta: f64,
    /// Cost-growth rate: producing level l_j costs c3 e^{gamma l_j}.
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Grid spacing between consecutive levels.
    pub step: f64,
    /// Mean of the base value.
    pub q0: f64,
    /// Standard deviation of the base value.
    pub s0: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            alpha: 1.0,
            beta: 2.0,
            gamma: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            step: 1.0,
            q0: 0.0,
            s0: 1.0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("step", self.step),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(SyntheticError::NonPositive { name, value });
            }
        }
        if !(self.s0.is_finite() && self.s0 >= 0.0) {
            return Err(SyntheticError::BadBaseNoise(self.s0));
        }
        Ok(())
    }
}

/// Synthetic hierarchy on the grid j * step.
#[derive(Clone, Debug)]
pub struct SyntheticModel {
    pub params: SyntheticParams,
}

impl SyntheticModel {
    pub fn new(params: SyntheticParams) -> Result<Self, SyntheticError> {
        params.validate()?;
        Ok(SyntheticModel { params })
    }
}

impl HierarchyModel for SyntheticModel {
    fn refine_sample(
        &self,
        sample_index: u64,
        seed: u64,
        target: f64,
    ) -> Result<Refinement, PathError> {
        let p = &self.params;
        let mut base_rng = stream(seed, sample_index, StreamRole::Base);
        let z0: f64 = StandardNormal.sample(&mut base_rng);
        let mut rng = stream(seed, sample_index, StreamRole::Model);

        let mut levels = vec![0.0];
        let mut values = vec![p.q0 + p.s0 * z0];
        let mut costs = vec![p.c3];
        let mut j = 0u64;
        while *levels.last().unwrap() < target {
            j += 1;
            let level = j as f64 * p.step;
            let z: f64 = StandardNormal.sample(&mut rng);
            let mean = p.c1 * (-p.alpha * level).exp() * p.step;
            let sd = (p.c2 * (-p.beta * level).exp()).sqrt() * p.step;
            let value = values[(j - 1) as usize] + mean + sd * z;
            levels.push(level);
            values.push(value);
            costs.push(p.c3 * (p.gamma * level).exp());
        }
        Ok(Refinement {
            levels,
            values,
            step_costs: costs,
            capped: false,
        })
    }
}

/// Exact expected gain over the base value.
///
/// With truncation at `l_max`, paths refine to the first grid level at or
/// past the bound, so the mean telescopes over all grid levels up to
/// `ceil(l_max / step) * step`. Unbounded, it is the closed geometric
/// series `c1 step e^{-alpha step} / (1 - e^{-alpha step})`.
pub fn synthetic_true_increment_mean(params: &SyntheticParams, l_max: Option<f64>) -> f64 {
    let decay = (-params.alpha * params.step).exp();
    match l_max {
        None => params.c1 * params.step * decay / (1.0 - decay),
        Some(bound) => {
            if bound <= 0.0 {
                return 0.0;
            }
            let last = (bound / params.step).ceil() as u64;
            let mut sum = 0.0;
            for j in 1..=last {
                sum += (-params.alpha * j as f64 * params.step).exp();
            }
            params.c1 * params.step * sum
        }
    }
}

/// Stationary Gaussian grids with variance `variance` and covariance
/// `covariance` between every pair of distinct grid points.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PairProcessParams {
    pub variance: f64,
    pub covariance: f64,
    /// Grid spacing, carried for consumers that scale by it.
    pub h: f64,
    /// Number of grid points per sample.
    pub length: usize,
}

impl PairProcessParams {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(SyntheticError::NonPositive {
                name: "variance",
                value: self.variance,
            });
        }
        if !(self.covariance.is_finite()
            && self.covariance >= 0.0
            && self.covariance < self.variance)
        {
            return Err(SyntheticError::BadPairCovariance {
                variance: self.variance,
                covariance: self.covariance,
            });
        }
        if self.length < 2 {
            return Err(SyntheticError::PairGridTooShort(self.length));
        }
        Ok(())
    }
}

/// Draw `count` stationary grids: each value is
/// `sqrt(c) * Z + sqrt(v - c) * eps_i` with a shared factor Z per sample,
/// which realizes variance v and covariance c at every lag. This is the
/// limiting covariance structure of a level process whose values converge:
/// all cross-level covariances approach a common constant.
pub fn stationary_pair_samples(
    params: &PairProcessParams,
    seed: u64,
    count: usize,
) -> Result<Vec<Vec<f64>>, SyntheticError> {
    params.validate()?;
    let shared_scale = params.covariance.sqrt();
    let noise_scale = (params.variance - params.covariance).sqrt();
    let mut samples = Vec::with_capacity(count);
    for k in 0..count {
        let mut rng = stream(seed, k as u64, StreamRole::Model);
        let shared: f64 = StandardNormal.sample(&mut rng);
        let grid: Vec<f64> = (0..params.length)
            .map(|_| {
                let eps: f64 = StandardNormal.sample(&mut rng);
                shared_scale * shared + noise_scale * eps
            })
            .collect();
        samples.push(grid);
    }
    Ok(samples)
}
