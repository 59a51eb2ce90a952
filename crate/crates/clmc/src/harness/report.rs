//! Artifact writers: JSON and CSV reports with stable, reproducible bytes.
//!
//! Everything written here is a pure function of the aggregated results,
//! serialized field by field in declaration order with shortest-roundtrip
//! float formatting, so identical runs produce identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{EstimatorMode, LevelBin, RateEstimates};
use crate::estimators::EstimateResult;
use crate::hierarchy::SamplePath;
use crate::level_law::{LevelLaw, TailOverflow};

use super::HarnessError;

pub const FORMAT_VERSION: u32 = 1;

/// Calibration artifact stored as rates.json.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatesArtifact {
    pub format_version: u32,
    pub model: String,
    pub pilot_size: usize,
    pub pilot_target_level: f64,
    pub bin_width: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub rates: RateEstimates,
}

/// Estimation artifact stored as estimate.json.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateArtifact {
    pub format_version: u32,
    pub model: String,
    pub mode: EstimatorMode,
    pub seed: u64,
    /// Target tolerance; absent for explicit-parameter runs.
    pub epsilon: Option<f64>,
    /// Exponential stopping rate; absent under a law override.
    pub r: Option<f64>,
    pub law: LevelLaw,
    /// Truncation level; absent in unbiased mode.
    pub l_max: Option<f64>,
    pub n: usize,
    pub estimate: f64,
    pub base_estimate: f64,
    pub increment_estimate: f64,
    /// Standard error of `estimate`, base level included.
    pub stderr: f64,
    /// `stderr` squared: variance of the mean of the per-sample totals.
    pub variance: f64,
    /// Total work units of the main run (pilot work excluded).
    pub cost: f64,
    /// Paths cut short by the machine limit or the model's own cap.
    pub machine_truncated_paths: usize,
    /// Tail mass beyond the machine limit; unbiased runs only.
    pub tail_overflow: Option<TailOverflow>,
    pub warnings: Vec<String>,
}

/// One successful sweep point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub cost: f64,
    pub n: usize,
    pub r: Option<f64>,
    pub l_max: Option<f64>,
}

/// One failed sweep point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepFailure {
    pub epsilon: f64,
    pub error: String,
}

/// Sweep summary stored as sweep.json.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepArtifact {
    pub format_version: u32,
    pub model: String,
    pub mode: EstimatorMode,
    pub seed: u64,
    /// log(cost) against log(stderr) slope; absent with < 2 usable points.
    pub cost_stderr_slope: Option<f64>,
    pub points: Vec<SweepPoint>,
    pub failures: Vec<SweepFailure>,
}

/// Shortest decimal that round-trips to the same double.
fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| HarnessError::Io(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(bytes)
        .map_err(|e| HarnessError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, HarnessError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_rates(dir: &Path) -> Result<Option<RatesArtifact>, HarnessError> {
    let path = dir.join("rates.json");
    match std::fs::read_to_string(&path) {
        Ok(text) => {
            let artifact: RatesArtifact = serde_json::from_str(&text).map_err(|e| {
                HarnessError::Config(format!("malformed {}: {e}", path.display()))
            })?;
            if artifact.format_version != FORMAT_VERSION {
                return Err(HarnessError::Config(format!(
                    "{} has format version {}, expected {}",
                    path.display(),
                    artifact.format_version,
                    FORMAT_VERSION
                )));
            }
            Ok(Some(artifact))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(HarnessError::Io(format!(
            "cannot read {}: {e}",
            path.display()
        ))),
    }
}

/// Per-bin calibration statistics as CSV.
pub fn write_bins_csv(dir: &Path, bins: &[LevelBin]) -> Result<PathBuf, HarnessError> {
    let path = dir.join("bins.csv");
    let mut out = String::from(
        "bin,center,count,slope_mean,slope_variance,cost_per_level,low_confidence\n",
    );
    for bin in bins {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            bin.index,
            fmt_f64(bin.center),
            bin.count,
            fmt_f64(bin.slope_mean),
            fmt_opt(bin.slope_variance),
            fmt_f64(bin.cost_per_level),
            bin.low_confidence
        ));
    }
    write_file(&path, out.as_bytes())?;
    Ok(path)
}

/// Per-sample contributions of the main run as CSV, in sample order.
pub fn write_contributions_csv(
    dir: &Path,
    paths: &[SamplePath],
    result: &EstimateResult,
) -> Result<PathBuf, HarnessError> {
    let path = dir.join("contributions.csv");
    let mut out = String::from("sample,contribution,base_value,cost\n");
    for (p, c) in paths.iter().zip(&result.contributions) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.sample_index,
            fmt_f64(*c),
            fmt_f64(p.values[0]),
            fmt_f64(p.total_cost())
        ));
    }
    write_file(&path, out.as_bytes())?;
    Ok(path)
}

/// Sweep table as CSV: one row per epsilon in run order.
pub fn write_sweep_csv(
    dir: &Path,
    points: &[SweepPoint],
) -> Result<PathBuf, HarnessError> {
    let path = dir.join("sweep.csv");
    let mut out = String::from("epsilon,estimate,stderr,cost,N,r,L_max\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(p.epsilon),
            fmt_f64(p.estimate),
            fmt_f64(p.stderr),
            fmt_f64(p.cost),
            p.n,
            fmt_opt(p.r),
            fmt_opt(p.l_max)
        ));
    }
    write_file(&path, out.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_the_formatter() {
        for x in [
            1.0,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -0.000123456789012345,
            f64::MIN_POSITIVE,
        ] {
            let text = fmt_f64(x);
            assert_eq!(text.parse::<f64>().unwrap(), x);
            assert!(!text.contains(','), "decimal separator must be '.'");
        }
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn sweep_csv_has_the_documented_header_and_blank_lmax() {
        let dir = tempfile::tempdir().unwrap();
        let points = vec![SweepPoint {
            epsilon: 0.25,
            estimate: 1.5,
            stderr: 0.1,
            cost: 1000.0,
            n: 64,
            r: Some(1.5),
            l_max: None,
        }];
        let path = write_sweep_csv(dir.path(), &points).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epsilon,estimate,stderr,cost,N,r,L_max"
        );
        assert_eq!(lines.next().unwrap(), "0.25,1.5,0.1,1000,64,1.5,");
    }

    #[test]
    fn rates_artifact_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = RatesArtifact {
            format_version: FORMAT_VERSION,
            model: "synthetic".into(),
            pilot_size: 100,
            pilot_target_level: 5.0,
            bin_width: 0.5,
            seed: 3,
            rates: RateEstimates::from_rates(1.0, 2.0, 1.0, 1.0, 1.0, 1.0),
        };
        write_json(dir.path(), "rates.json", &artifact).unwrap();
        let back = read_rates(dir.path()).unwrap().unwrap();
        assert_eq!(back.rates.alpha, 1.0);
        assert_eq!(back.seed, 3);
        assert!(read_rates(&dir.path().join("missing")).unwrap().is_none());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = RatesArtifact {
            format_version: FORMAT_VERSION + 1,
            model: "synthetic".into(),
            pilot_size: 100,
            pilot_target_level: 5.0,
            bin_width: 0.5,
            seed: 3,
            rates: RateEstimates::from_rates(1.0, 2.0, 1.0, 1.0, 1.0, 1.0),
        };
        write_json(dir.path(), "rates.json", &artifact).unwrap();
        assert!(read_rates(dir.path()).is_err());
    }
}
