//! Command-line front end for calibration, estimation, sweeps, and
//! spectral-basis validation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clmc::harness::{
    run_calibrate, run_estimate, run_kl_validate, run_sweep, ExperimentConfig, ExplicitParams,
    HarnessError,
};

#[derive(Parser)]
#[command(name = "clmc", version, about = "Continuous-level Monte Carlo runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit level decay and cost rates from a fixed-depth pilot run.
    Calibrate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run one estimation end to end and write its artifacts.
    Estimate {
        #[command(flatten)]
        config: ConfigArg,
        /// Target root-mean-square tolerance; overrides the config.
        #[arg(long, conflicts_with_all = ["r", "n", "lmax"])]
        epsilon: Option<f64>,
        /// Explicit exponential stopping rate; overrides the config.
        #[arg(long, requires = "n")]
        r: Option<f64>,
        /// Explicit sample count, used with --r.
        #[arg(long)]
        n: Option<usize>,
        /// Explicit truncation level for bounded runs.
        #[arg(long, requires = "n")]
        lmax: Option<f64>,
    },
    /// Run tolerance-driven estimates over several epsilons and fit the
    /// cost-accuracy slope.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated tolerance list, at least three values.
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
    },
    /// Check the covariance spectrum against its closed form.
    KlValidate {
        /// Number of retained modes.
        #[arg(long, default_value_t = 36)]
        modes: usize,
        /// Quadrature grid resolution.
        #[arg(long, default_value_t = 2048)]
        grid_size: usize,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the experiment configuration JSON.
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Calibrate { config } => {
            let config = ExperimentConfig::load(&config.config)?;
            let outcome = run_calibrate(&config)?;
            let r = &outcome.rates;
            println!(
                "calibrated alpha={:.4} beta={:.4} gamma={:.4} (c1={:.4e} c2={:.4e} c3={:.4e})",
                r.alpha, r.beta, r.gamma, r.c1, r.c2, r.c3
            );
            for warning in &r.warnings {
                eprintln!("warning: {warning}");
            }
            println!("wrote {}", outcome.rates_path.display());
            println!("wrote {}", outcome.bins_path.display());
            Ok(())
        }
        Command::Estimate {
            config,
            epsilon,
            r,
            n,
            lmax,
        } => {
            let mut config = ExperimentConfig::load(&config.config)?;
            apply_estimate_overrides(&mut config, epsilon, r, n, lmax)?;
            let outcome = run_estimate(&config)?;
            let a = &outcome.artifact;
            println!(
                "estimate={} stderr={} cost={} n={}",
                a.estimate, a.stderr, a.cost, a.n
            );
            if let Some(tail) = &a.tail_overflow {
                if tail.exceeds_one {
                    eprintln!(
                        "warning: tail bound {} at machine level {} exceeds one; \
                         results may be biased by the machine refinement limit",
                        tail.bound, tail.machine_level
                    );
                }
            }
            for warning in &a.warnings {
                eprintln!("warning: {warning}");
            }
            println!("wrote {}", outcome.estimate_path.display());
            println!("wrote {}", outcome.contributions_path.display());
            Ok(())
        }
        Command::Sweep { config, epsilons } => {
            let config = ExperimentConfig::load(&config.config)?;
            let outcome = run_sweep(&config, &epsilons)?;
            let a = &outcome.artifact;
            for p in &a.points {
                println!(
                    "epsilon={} estimate={} stderr={} cost={} n={}",
                    p.epsilon, p.estimate, p.stderr, p.cost, p.n
                );
            }
            for f in &a.failures {
                eprintln!("epsilon={} failed: {}", f.epsilon, f.error);
            }
            match a.cost_stderr_slope {
                Some(slope) => println!("log(cost) vs log(stderr) slope: {slope:.4}"),
                None => eprintln!("warning: too few points to fit a cost slope"),
            }
            println!("wrote {}", outcome.csv_path.display());
            println!("wrote {}", outcome.json_path.display());
            Ok(())
        }
        Command::KlValidate { modes, grid_size } => {
            let report = run_kl_validate(modes, grid_size)?;
            for check in &report.checks {
                println!(
                    "mode {}: computed={:.12} analytic={:.12} rel_err={:.3e}",
                    check.index, check.computed, check.analytic, check.relative_error
                );
            }
            println!(
                "captured fraction {:.4} over {} modes",
                report.captured_fraction, report.modes
            );
            for warning in &report.warnings {
                eprintln!("warning: {warning}");
            }
            if report.pass {
                println!("spectrum check passed at {:.1}% tolerance", report.tolerance * 100.0);
                Ok(())
            } else {
                Err(HarnessError::Config(format!(
                    "spectrum check failed: some modes exceed {:.1}% relative error",
                    report.tolerance * 100.0
                )))
            }
        }
    }
}

/// Apply command-line estimation overrides onto the loaded configuration.
///
/// `--epsilon` switches the run to tolerance-driven, clearing any explicit
/// parameters from the file; `--r/--n/--lmax` switch it to explicit
/// parameters, clearing a file-level epsilon. clap rejects mixing the two
/// groups on the command line itself.
fn apply_estimate_overrides(
    config: &mut ExperimentConfig,
    epsilon: Option<f64>,
    r: Option<f64>,
    n: Option<usize>,
    lmax: Option<f64>,
) -> Result<(), HarnessError> {
    if let Some(epsilon) = epsilon {
        config.epsilon = Some(epsilon);
        config.explicit = None;
        return Ok(());
    }
    if r.is_some() || n.is_some() || lmax.is_some() {
        let n = n.ok_or_else(|| {
            HarnessError::Config("explicit overrides need --n".into())
        })?;
        config.explicit = Some(ExplicitParams { r, n, l_max: lmax });
        config.epsilon = None;
    }
    Ok(())
}
