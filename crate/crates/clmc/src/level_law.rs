//! Stopping-level laws: distributions of the random refinement depth.
//!
//! A law is described through its survival function `P(L >= l)`. The
//! exponential law is continuous; the geometric and tabulated laws are
//! integer-valued, with survival constant on each interval `(j-1, j]`.
//! Sampling uses the inverse-survival transform of a uniform draw on (0, 1]
//! so that a fixed uniform input maps to an exactly predictable level.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::uniform_open_closed;

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),
    #[error("geometric success parameter must lie in (0, 1), got {0}")]
    SuccessOutOfRange(f64),
    #[error("piecewise law needs at least one (level, survival) pair")]
    EmptyTable,
    #[error("piecewise table invalid at entry {index}: {reason}")]
    BadTableEntry { index: usize, reason: String },
    #[error("integral crosses a level where the survival function is zero")]
    ZeroSurvival,
    #[error("integration bounds out of order: [{0}, {1}]")]
    BadBounds(f64, f64),
}

/// Distribution of the stopping level `L >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum LevelLaw {
    /// Continuous law with survival `exp(-rate * l)`.
    Exponential { rate: f64 },
    /// Geometric law on {0, 1, 2, ...} with success probability `rate`:
    /// `P(L >= j) = (1 - rate)^j`.
    Geometric { rate: f64 },
    /// Integer-supported law tabulated as (level, survival) pairs with
    /// strictly increasing positive levels; `P(L >= j)` equals the survival
    /// at the smallest tabulated level >= j, 1 before the first entry and 0
    /// past the last.
    Piecewise { survival: Vec<(u32, f64)> },
}

impl LevelLaw {
    pub fn validate(&self) -> Result<(), LawError> {
        match self {
            LevelLaw::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(LawError::NonPositiveRate(*rate));
                }
            }
            LevelLaw::Geometric { rate } => {
                if !(rate.is_finite() && *rate > 0.0 && *rate < 1.0) {
                    return Err(LawError::SuccessOutOfRange(*rate));
                }
            }
            LevelLaw::Piecewise { survival } => {
                if survival.is_empty() {
                    return Err(LawError::EmptyTable);
                }
                let mut prev_level = 0u32;
                let mut prev_surv = 1.0f64;
                for (i, &(level, s)) in survival.iter().enumerate() {
                    if level <= prev_level {
                        return Err(LawError::BadTableEntry {
                            index: i,
                            reason: format!("levels must increase strictly from 1, got {level}"),
                        });
                    }
                    if !(s.is_finite() && s > 0.0 && s <= prev_surv) {
                        return Err(LawError::BadTableEntry {
                            index: i,
                            reason: format!(
                                "survival must be positive and non-increasing, got {s} after {prev_surv}"
                            ),
                        });
                    }
                    prev_level = level;
                    prev_surv = s;
                }
            }
        }
        Ok(())
    }

    /// True for integer-valued laws (survival piecewise constant on (j-1, j]).
    pub fn is_discrete(&self) -> bool {
        !matches!(self, LevelLaw::Exponential { .. })
    }

    /// `P(L >= level)`. Levels at or below zero have survival 1.
    pub fn survival(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return 1.0;
        }
        match self {
            LevelLaw::Exponential { rate } => (-rate * level).exp(),
            LevelLaw::Geometric { rate } => {
                let j = level.ceil();
                (1.0 - rate).powf(j)
            }
            LevelLaw::Piecewise { survival } => {
                let j = level.ceil() as u32;
                for &(l, s) in survival {
                    if l >= j {
                        return s;
                    }
                }
                0.0
            }
        }
    }

    /// Level `l` with `P(L >= l) = u`, the generalized inverse of the
    /// survival function; `u` must lie in (0, 1].
    pub fn inverse_survival(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u <= 1.0);
        match self {
            LevelLaw::Exponential { rate } => -u.ln() / rate,
            LevelLaw::Geometric { rate } => {
                if u >= 1.0 {
                    return 0.0;
                }
                let l = (u.ln() / (1.0 - rate).ln()).floor();
                l.max(0.0)
            }
            LevelLaw::Piecewise { survival } => {
                // Largest tabulated level whose survival still covers u.
                let mut level = 0.0;
                for &(l, s) in survival {
                    if s >= u {
                        level = f64::from(l);
                    } else {
                        break;
                    }
                }
                level
            }
        }
    }

    /// Draw a stopping level from the law.
    pub fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        self.inverse_survival(uniform_open_closed(rng))
    }

    /// Expected number of paths among `n` that stop beyond `machine_level`:
    /// `n * P(L >= machine_level)`. This is a bound and may exceed 1; the
    /// flag marks that case rather than clamping.
    pub fn tail_overflow(&self, n: u64, machine_level: f64) -> TailOverflow {
        let bound = n as f64 * self.survival(machine_level);
        TailOverflow {
            machine_level,
            bound,
            exceeds_one: bound > 1.0,
        }
    }

    /// Integral of the reciprocal survival function over `[a, b]`, the
    /// quantity behind interval weights.
    pub fn reciprocal_survival_integral(&self, a: f64, b: f64) -> Result<f64, LawError> {
        if !(a.is_finite() && b.is_finite()) || b < a {
            return Err(LawError::BadBounds(a, b));
        }
        if b == a {
            return Ok(0.0);
        }
        match self {
            LevelLaw::Exponential { rate } => {
                // (e^{rb} - e^{ra}) / r, written to stay accurate for small
                // r * (b - a).
                Ok((rate * a).exp() * (rate * (b - a)).exp_m1() / rate)
            }
            _ => {
                // Survival is constant on integer cells (m-1, m]; sum the
                // overlap of [a, b] with each cell.
                let mut total = 0.0;
                let first = a.floor() as i64 + 1;
                let last = b.ceil() as i64;
                for m in first..=last {
                    let lo = a.max((m - 1) as f64);
                    let hi = b.min(m as f64);
                    if hi <= lo {
                        continue;
                    }
                    let s = self.survival(m as f64);
                    if s <= 0.0 {
                        return Err(LawError::ZeroSurvival);
                    }
                    total += (hi - lo) / s;
                }
                Ok(total)
            }
        }
    }
}

/// Tail-mass report for a machine refinement bound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TailOverflow {
    pub machine_level: f64,
    /// Raw bound `n * P(L >= machine_level)`, not clamped.
    pub bound: f64,
    /// The bound exceeds one and is vacuous as a probability.
    pub exceeds_one: bool,
}
