//! Sample paths over refinement hierarchies and the generic path builder.
//!
//! A model exposes one operation: refine a single sample from level 0 until
//! the recorded level reaches a target (or the model's own resource cap
//! fires). The builder wraps that with the random stopping level, the
//! deterministic truncation bound and the machine-limit fallback, producing
//! a validated [`SamplePath`].

use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::level_law::{LawError, LevelLaw};
use crate::rng::{stream, StreamRole};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("law rejected: {0}")]
    Law(#[from] LawError),
    #[error("model failure on sample {sample_index}: {reason}")]
    Model { sample_index: u64, reason: String },
    #[error("path invariant violated: {0}")]
    Invariant(String),
}

/// One sample's record of the refinement process.
#[derive(Clone, Debug)]
pub struct SamplePath {
    pub sample_index: u64,
    /// Refinement levels, starting at exactly 0, strictly increasing.
    pub levels: Vec<f64>,
    /// Quantity of interest at each level.
    pub values: Vec<f64>,
    /// Work units spent producing each level, including the base solve.
    pub step_costs: Vec<f64>,
    /// Stopping level drawn from the law (before truncation).
    pub stopping_level: f64,
    /// Deterministic truncation bound; `None` runs unbounded.
    pub truncation_level: Option<f64>,
    /// The machine limit cut refinement short and the final interval is a
    /// synthetic flat extension.
    pub machine_truncated: bool,
    /// Wall-clock seconds spent building the path. Diagnostic only; never
    /// written to deterministic artifacts.
    pub wall_seconds: f64,
}

impl SamplePath {
    /// Index of the last recorded level.
    pub fn terminal_index(&self) -> usize {
        self.levels.len() - 1
    }

    /// Effective stopping level: the drawn level clipped by truncation.
    pub fn target_level(&self) -> f64 {
        match self.truncation_level {
            Some(t) => self.stopping_level.min(t),
            None => self.stopping_level,
        }
    }

    /// Total work units across all steps.
    pub fn total_cost(&self) -> f64 {
        self.step_costs.iter().sum()
    }

    pub fn validate(&self) -> Result<(), PathError> {
        let n = self.levels.len();
        if n == 0 || self.values.len() != n || self.step_costs.len() != n {
            return Err(PathError::Invariant(format!(
                "field lengths disagree: {} levels, {} values, {} costs",
                n,
                self.values.len(),
                self.step_costs.len()
            )));
        }
        if self.levels[0] != 0.0 {
            return Err(PathError::Invariant(format!(
                "first level must be 0, got {}",
                self.levels[0]
            )));
        }
        for w in self.levels.windows(2) {
            if !(w[1] > w[0]) {
                return Err(PathError::Invariant(format!(
                    "levels must increase strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if self.step_costs.iter().any(|c| !(*c >= 0.0)) {
            return Err(PathError::Invariant("negative step cost".into()));
        }
        let target = self.target_level();
        if target > 0.0 {
            if n < 2 {
                return Err(PathError::Invariant(
                    "positive target needs at least one refinement interval".into(),
                ));
            }
            let j = n - 1;
            if !(self.levels[j] >= target && self.levels[j - 1] < target) {
                return Err(PathError::Invariant(format!(
                    "terminal index is not the first level past the target: \
                     levels [{}, {}], target {}",
                    self.levels[j - 1],
                    self.levels[j],
                    target
                )));
            }
        }
        Ok(())
    }
}

/// Raw refinement record returned by a model for one sample.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub step_costs: Vec<f64>,
    /// The model's internal resource cap fired before the target.
    pub capped: bool,
}

/// A refinement hierarchy that can advance one sample toward a target level.
///
/// Contract: records start at level exactly 0 and increase strictly; the
/// last record is the first whose level reaches the target, unless the
/// model's resource cap fires first (`capped`). For a fixed
/// `(sample_index, seed)` the record sequence must be a deterministic
/// function of the target, and targets that differ only in length must
/// share their common prefix.
pub trait HierarchyModel: Sync {
    fn refine_sample(
        &self,
        sample_index: u64,
        seed: u64,
        target: f64,
    ) -> Result<Refinement, PathError>;
}

/// Build one path: draw the stopping level, refine to the clipped target,
/// and extend flat if the machine limit cut the refinement short.
pub fn build_path<M: HierarchyModel + ?Sized>(
    model: &M,
    sample_index: u64,
    seed: u64,
    law: &LevelLaw,
    truncation_level: Option<f64>,
    machine_limit: f64,
) -> Result<SamplePath, PathError> {
    let started = Instant::now();
    let mut rng = stream(seed, sample_index, StreamRole::StoppingLevel);
    let stopping_level = law.sample(&mut rng);
    let target = match truncation_level {
        Some(t) => stopping_level.min(t),
        None => stopping_level,
    };
    let clipped = target.min(machine_limit);
    let refinement = model.refine_sample(sample_index, seed, clipped)?;
    let mut path = SamplePath {
        sample_index,
        levels: refinement.levels,
        values: refinement.values,
        step_costs: refinement.step_costs,
        stopping_level,
        truncation_level,
        machine_truncated: false,
        wall_seconds: 0.0,
    };
    let reached = path.levels.last().copied().unwrap_or(f64::NEG_INFINITY);
    if reached < target {
        // Freeze the value across the unreachable remainder: the flat step
        // contributes a zero increment, only its weight bookkeeping remains.
        let frozen = *path.values.last().ok_or_else(|| PathError::Invariant(
            "model returned an empty refinement".into(),
        ))?;
        path.levels.push(target);
        path.values.push(frozen);
        path.step_costs.push(0.0);
        path.machine_truncated = true;
    }
    path.validate()?;
    path.wall_seconds = started.elapsed().as_secs_f64();
    Ok(path)
}

/// Build a pilot path refined to a fixed target level, with no random
/// stopping draw. Used for calibration. A capped refinement is kept as-is
/// (no flat extension) and flagged; its recorded stopping level is the
/// deepest level actually reached.
pub fn build_pilot_path<M: HierarchyModel + ?Sized>(
    model: &M,
    sample_index: u64,
    seed: u64,
    target: f64,
) -> Result<SamplePath, PathError> {
    let started = Instant::now();
    let refinement = model.refine_sample(sample_index, seed, target)?;
    let reached = *refinement.levels.last().ok_or_else(|| {
        PathError::Invariant("model returned an empty refinement".into())
    })?;
    let mut path = SamplePath {
        sample_index,
        levels: refinement.levels,
        values: refinement.values,
        step_costs: refinement.step_costs,
        stopping_level: reached,
        truncation_level: Some(reached),
        machine_truncated: refinement.capped,
        wall_seconds: 0.0,
    };
    path.validate()?;
    path.wall_seconds = started.elapsed().as_secs_f64();
    Ok(path)
}

/// Dump paths as CSV: one row per recorded level.
pub fn write_paths_csv<W: Write>(out: &mut W, paths: &[SamplePath]) -> std::io::Result<()> {
    writeln!(out, "sample,j,level,value,step_cost")?;
    for path in paths {
        for j in 0..path.levels.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                path.sample_index, j, path.levels[j], path.values[j], path.step_costs[j]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_models {
    use super::*;

    /// Deterministic unit-grid model: levels 0, 1, 2, ... with value equal
    /// to the level and unit step cost. Optional internal cap.
    pub struct UnitGridModel {
        pub cap_level: Option<f64>,
    }

    impl HierarchyModel for UnitGridModel {
        fn refine_sample(
            &self,
            _sample_index: u64,
            _seed: u64,
            target: f64,
        ) -> Result<Refinement, PathError> {
            let mut levels = vec![0.0];
            let mut values = vec![0.0];
            let mut costs = vec![1.0];
            let mut capped = false;
            let mut j = 0u32;
            while *levels.last().unwrap() < target {
                let next = f64::from(j + 1);
                if let Some(cap) = self.cap_level {
                    if next > cap {
                        capped = true;
                        break;
                    }
                }
                levels.push(next);
                values.push(next);
                costs.push(1.0);
                j += 1;
            }
            Ok(Refinement {
                levels,
                values,
                step_costs: costs,
                capped,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_models::UnitGridModel;
    use super::*;

    fn fixed_law(level: f64) -> LevelLaw {
        // Piecewise law with all mass at one integer level gives a
        // deterministic stopping draw.
        LevelLaw::Piecewise {
            survival: vec![(level as u32, 1.0)],
        }
    }

    #[test]
    fn unit_grid_path_stops_at_first_level_past_target() {
        let model = UnitGridModel { cap_level: None };
        let law = LevelLaw::Exponential { rate: 1.0 };
        // Find a sample whose drawn stopping level lands strictly inside an
        // interval, then check the terminal-index rule.
        let path = build_path(&model, 3, 17, &law, None, f64::INFINITY).unwrap();
        let target = path.target_level();
        let j = path.terminal_index();
        assert!(path.levels[j] >= target);
        if target > 0.0 {
            assert!(path.levels[j - 1] < target);
        }
        path.validate().unwrap();
    }

    #[test]
    fn deterministic_draw_gives_expected_grid() {
        let model = UnitGridModel { cap_level: None };
        let path = build_path(&model, 0, 1, &fixed_law(3.0), None, f64::INFINITY).unwrap();
        assert_eq!(path.stopping_level, 3.0);
        assert_eq!(path.levels, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(!path.machine_truncated);
    }

    #[test]
    fn machine_limit_forces_flat_extension() {
        let model = UnitGridModel { cap_level: None };
        let path = build_path(&model, 0, 1, &fixed_law(5.0), None, 2.0).unwrap();
        assert!(path.machine_truncated);
        assert_eq!(path.levels, vec![0.0, 1.0, 2.0, 5.0]);
        // Zero slope over the synthetic final interval.
        let n = path.values.len();
        assert_eq!(path.values[n - 1], path.values[n - 2]);
        assert_eq!(path.step_costs[n - 1], 0.0);
        path.validate().unwrap();
    }

    #[test]
    fn internal_cap_also_flags_truncation() {
        let model = UnitGridModel {
            cap_level: Some(2.0),
        };
        let path = build_path(&model, 0, 1, &fixed_law(4.0), None, f64::INFINITY).unwrap();
        assert!(path.machine_truncated);
        assert_eq!(path.levels, vec![0.0, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn truncation_level_clips_the_drawn_level() {
        let model = UnitGridModel { cap_level: None };
        let path = build_path(&model, 0, 1, &fixed_law(6.0), Some(2.5), f64::INFINITY).unwrap();
        assert_eq!(path.stopping_level, 6.0);
        assert_eq!(path.target_level(), 2.5);
        assert_eq!(path.levels, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(!path.machine_truncated);
    }

    #[test]
    fn identical_inputs_give_identical_paths() {
        let model = UnitGridModel { cap_level: None };
        let law = LevelLaw::Exponential { rate: 0.8 };
        let a = build_path(&model, 9, 123, &law, None, f64::INFINITY).unwrap();
        let b = build_path(&model, 9, 123, &law, None, f64::INFINITY).unwrap();
        assert_eq!(a.levels, b.levels);
        assert_eq!(a.values, b.values);
        assert_eq!(a.stopping_level, b.stopping_level);
    }

    #[test]
    fn pilot_path_refines_to_fixed_target() {
        let model = UnitGridModel { cap_level: None };
        let path = build_pilot_path(&model, 4, 2, 5.0).unwrap();
        assert_eq!(path.levels, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(!path.machine_truncated);
    }

    #[test]
    fn csv_dump_has_expected_shape() {
        let model = UnitGridModel { cap_level: None };
        let path = build_path(&model, 0, 1, &fixed_law(2.0), None, f64::INFINITY).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &[path]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "sample,j,level,value,step_cost");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0,0,0,1");
    }

    #[test]
    fn validation_catches_broken_paths() {
        let mut path = SamplePath {
            sample_index: 0,
            levels: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
            step_costs: vec![1.0, 1.0],
            stopping_level: 0.5,
            truncation_level: None,
            machine_truncated: false,
            wall_seconds: 0.0,
        };
        path.validate().unwrap();
        path.levels[0] = 0.1;
        assert!(path.validate().is_err());
    }
}
