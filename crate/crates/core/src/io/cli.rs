//! `ssm` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::body_model::{compute_compensation, verify_coverage, DEFAULT_SAMPLING_STEP};
use crate::geometry::{fit_residuals, fit_transform, FitMode};
use crate::io::config::{load_body_model, resolve_config};
use crate::io::formats::{
    compensation_csv, decision_log_csv, format_distance, matrix_csv, pair_trace_csv, parse_correspondences,
    transform_report, write_atomic,
};
use crate::simulation::run_scenario;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ssm", version, about = "Keypoint-pairwise speed and separation monitoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Rigid,
    Affine,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the stop and reduced-speed threshold matrices.
    Matrix {
        /// Preset name or configuration file.
        #[arg(long)]
        config: String,
    },
    /// Compute compensation coefficients for a body model.
    Compensate {
        /// Body model file (TOML).
        #[arg(long)]
        body: PathBuf,
        /// Sampling step in meters.
        #[arg(long, default_value_t = DEFAULT_SAMPLING_STEP)]
        step: f64,
        /// Also run a Monte-Carlo coverage check with this many samples.
        #[arg(long)]
        verify: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a camera-to-robot transform from point correspondences.
    Calibrate {
        /// File of `sx,sy,sz,tx,ty,tz` rows.
        #[arg(long)]
        correspondences: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Rigid)]
        mode: ModeArg,
    },
    /// Run a closed-loop scenario and write its logs.
    Run {
        /// Preset name or configuration file.
        #[arg(long)]
        config: String,
        /// Output directory for `decisions.csv` and `pair_distances.csv`.
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("cannot read `{}`: {e}", path.display())))
}

fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    write_atomic(path, contents.as_bytes())
        .map_err(|e| Failure::Runtime(format!("cannot write `{}`: {e}", path.display())))
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let io_fail = |e: std::io::Error| Failure::Runtime(e.to_string());
    match command {
        Command::Matrix { config } => {
            let cfg = resolve_config(&config).map_err(|e| Failure::Invalid(e.to_string()))?;
            out.write_all(matrix_csv(&cfg.matrices()).as_bytes()).map_err(io_fail)?;
        }
        Command::Compensate {
            body,
            step,
            verify,
            seed,
            out: out_path,
        } => {
            let model = load_body_model(&read_input(&body)?).map_err(|e| Failure::Invalid(e.to_string()))?;
            let table = compute_compensation(&model, step).map_err(|e| Failure::Invalid(e.to_string()))?;
            let text = compensation_csv(&table);
            match out_path {
                Some(p) => write_output(&p, &text)?,
                None => out.write_all(text.as_bytes()).map_err(io_fail)?,
            }
            if let Some(trials) = verify {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let report = verify_coverage(&model, &table, trials, &mut rng);
                writeln!(
                    err,
                    "coverage: {} samples, {} violations",
                    report.trials, report.violations
                )
                .map_err(io_fail)?;
                if report.violations > 0 {
                    return Err(Failure::Runtime(format!(
                        "coverage check failed, worst excess {} m",
                        format_distance(report.worst_excess)
                    )));
                }
            }
        }
        Command::Calibrate { correspondences, mode } => {
            let pairs = parse_correspondences(&read_input(&correspondences)?)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", correspondences.display())))?;
            let mode = match mode {
                ModeArg::Rigid => FitMode::Rigid,
                ModeArg::Affine => FitMode::Affine,
            };
            let t = fit_transform(&pairs, mode).map_err(|e| Failure::Invalid(e.to_string()))?;
            let (max, rms) = fit_residuals(&t, &pairs);
            out.write_all(transform_report(&t, max, rms).as_bytes())
                .map_err(io_fail)?;
        }
        Command::Run { config, out: dir } => {
            let cfg = resolve_config(&config).map_err(|e| Failure::Invalid(e.to_string()))?;
            let result = run_scenario(&cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
            std::fs::create_dir_all(&dir)
                .map_err(|e| Failure::Runtime(format!("cannot create `{}`: {e}", dir.display())))?;
            write_output(&dir.join("decisions.csv"), &decision_log_csv(&result))?;
            write_output(&dir.join("pair_distances.csv"), &pair_trace_csv(&result))?;
            writeln!(out, "scenario,{}", cfg.name).map_err(io_fail)?;
            writeln!(out, "frames,{}", result.summary.frames).map_err(io_fail)?;
            for (event, n) in &result.summary.event_counts {
                writeln!(out, "{},{n}", event.as_str()).map_err(io_fail)?;
            }
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}
