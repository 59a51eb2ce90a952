//! Deterministic parallel path building.
//!
//! Sample indices are split into contiguous blocks, one per worker, fixed
//! before any work starts. Every path depends only on `(seed, index)`, so
//! concatenating the blocks in order reproduces the single-threaded
//! result exactly, whatever the worker count.

use crate::hierarchy::{build_path, build_pilot_path, HierarchyModel, PathError, SamplePath};
use crate::level_law::LevelLaw;

use super::HarnessError;

/// Worker count for this run: the `CLMC_WORKERS` environment variable
/// when set (it must parse to a positive integer), else the configured
/// count.
pub fn effective_workers(configured: usize) -> Result<usize, HarnessError> {
    match std::env::var("CLMC_WORKERS") {
        Ok(text) => {
            let parsed: usize = text.trim().parse().map_err(|_| {
                HarnessError::Config(format!(
                    "CLMC_WORKERS must be a positive integer, got {text:?}"
                ))
            })?;
            if parsed == 0 {
                return Err(HarnessError::Config(
                    "CLMC_WORKERS must be at least 1".into(),
                ));
            }
            Ok(parsed)
        }
        Err(std::env::VarError::NotPresent) => {
            if configured == 0 {
                return Err(HarnessError::Config("worker count must be positive".into()));
            }
            Ok(configured)
        }
        Err(std::env::VarError::NotUnicode(_)) => Err(HarnessError::Config(
            "CLMC_WORKERS is not valid UTF-8".into(),
        )),
    }
}

/// Build paths for indices `0..count` (plus `first_index`) across static
/// blocks. The result is ordered by sample index.
fn run_blocks<F>(count: usize, workers: usize, build: F) -> Result<Vec<SamplePath>, PathError>
where
    F: Fn(u64) -> Result<SamplePath, PathError> + Sync,
{
    if count == 0 {
        return Ok(Vec::new());
    }
    let workers = workers.clamp(1, count);
    let block = count.div_ceil(workers);
    let mut block_results: Vec<Result<Vec<SamplePath>, PathError>> = Vec::with_capacity(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let build = &build;
                scope.spawn(move || {
                    let start = w * block;
                    let end = ((w + 1) * block).min(count);
                    let mut out = Vec::with_capacity(end - start);
                    for i in start..end {
                        out.push(build(i as u64)?);
                    }
                    Ok(out)
                })
            })
            .collect();
        for handle in handles {
            block_results.push(handle.join().expect("path worker panicked"));
        }
    });
    let mut paths = Vec::with_capacity(count);
    for result in block_results {
        paths.extend(result?);
    }
    Ok(paths)
}

/// Stochastically stopped paths for `count` samples starting at
/// `first_index`.
#[allow(clippy::too_many_arguments)]
pub fn build_paths_parallel(
    model: &dyn HierarchyModel,
    law: &LevelLaw,
    seed: u64,
    first_index: u64,
    count: usize,
    truncation_level: Option<f64>,
    machine_limit: f64,
    workers: usize,
) -> Result<Vec<SamplePath>, PathError> {
    run_blocks(count, workers, |i| {
        build_path(
            model,
            first_index + i,
            seed,
            law,
            truncation_level,
            machine_limit,
        )
    })
}

/// Fixed-depth pilot paths for `count` samples starting at `first_index`.
pub fn build_pilot_paths_parallel(
    model: &dyn HierarchyModel,
    seed: u64,
    first_index: u64,
    count: usize,
    target: f64,
    workers: usize,
) -> Result<Vec<SamplePath>, PathError> {
    run_blocks(count, workers, |i| {
        build_pilot_path(model, first_index + i, seed, target)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{SyntheticModel, SyntheticParams};

    fn model() -> SyntheticModel {
        SyntheticModel::new(SyntheticParams::default()).unwrap()
    }

    fn strip_wall(paths: &mut [SamplePath]) {
        for p in paths {
            p.wall_seconds = 0.0;
        }
    }

    #[test]
    fn worker_count_does_not_change_the_paths() {
        let model = model();
        let law = LevelLaw::Exponential { rate: 1.5 };
        let mut single =
            build_paths_parallel(&model, &law, 42, 0, 97, None, f64::INFINITY, 1).unwrap();
        strip_wall(&mut single);
        for workers in [2, 4, 8, 97, 200] {
            let mut multi =
                build_paths_parallel(&model, &law, 42, 0, 97, None, f64::INFINITY, workers)
                    .unwrap();
            strip_wall(&mut multi);
            assert_eq!(single.len(), multi.len());
            for (a, b) in single.iter().zip(&multi) {
                assert_eq!(a.sample_index, b.sample_index);
                assert_eq!(a.levels, b.levels);
                assert_eq!(a.values, b.values);
                assert_eq!(a.step_costs, b.step_costs);
                assert_eq!(a.stopping_level, b.stopping_level);
            }
        }
    }

    #[test]
    fn indices_are_contiguous_from_the_offset() {
        let model = model();
        let paths = build_pilot_paths_parallel(&model, 7, 500, 23, 2.0, 4).unwrap();
        let indices: Vec<u64> = paths.iter().map(|p| p.sample_index).collect();
        assert_eq!(indices, (500..523).collect::<Vec<u64>>());
    }

    #[test]
    fn zero_count_yields_no_paths() {
        let model = model();
        let law = LevelLaw::Exponential { rate: 1.0 };
        let paths =
            build_paths_parallel(&model, &law, 1, 0, 0, None, f64::INFINITY, 4).unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn env_override_beats_configured_count() {
        // Env manipulation is process-global; hold the shared lock and run
        // all cases in one test to avoid interference.
        let _guard = crate::harness::env_lock();
        std::env::remove_var("CLMC_WORKERS");
        assert_eq!(effective_workers(3).unwrap(), 3);
        assert!(effective_workers(0).is_err());
        std::env::set_var("CLMC_WORKERS", "8");
        assert_eq!(effective_workers(3).unwrap(), 8);
        std::env::set_var("CLMC_WORKERS", "zero");
        assert!(effective_workers(3).is_err());
        std::env::set_var("CLMC_WORKERS", "0");
        assert!(effective_workers(3).is_err());
        std::env::remove_var("CLMC_WORKERS");
    }
}
