//! `wtal <stage> [--config FILE] [--seed N] [--out DIR] [--gamma G]`.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for I/O
//! failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use wtal_core::Error as CoreError;

use crate::config::RunConfig;
use crate::error::{Result, WtalError};
use crate::stages;

#[derive(Debug, Parser)]
#[command(name = "wtal", version, about = "Weakly-supervised temporal action localization with CAS deconfounding")]
struct Cli {
    #[command(subcommand)]
    stage: Stage,
}

#[derive(Debug, Subcommand)]
enum Stage {
    /// Write synthetic train and test datasets.
    Gen(Common),
    /// Train the top-k classifier.
    TrainWtal(Common),
    /// Train and orient the projector bank.
    TrainTspca(Common),
    /// Choose gamma and write raw and calibrated CAS.
    Calibrate(Common),
    /// Threshold both CAS dumps into action instances.
    Localize(Common),
    /// Score predictions against the test ground truth.
    Eval(Common),
    /// Emit mAP, error-profile and trace tables.
    Report(Common),
    /// Every stage in order, calibrated and uncalibrated.
    RunAll(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Key/value run configuration; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixes gamma, disabling the validation sweep.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(g) = self.gamma {
            cfg.set_gamma(g);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(stage: &Stage) -> Result<()> {
    let (common, step): (&Common, fn(&RunConfig) -> Result<()>) = match stage {
        Stage::Gen(c) => (c, stages::gen),
        Stage::TrainWtal(c) => (c, stages::train_wtal),
        Stage::TrainTspca(c) => (c, stages::train_tspca),
        Stage::Calibrate(c) => (c, stages::calibrate),
        Stage::Localize(c) => (c, stages::localize),
        Stage::Eval(c) => (c, stages::eval),
        Stage::Report(c) => (c, stages::report),
        Stage::RunAll(c) => (c, stages::run_all),
    };
    step(&common.resolve()?)
}

fn describe(err: &WtalError) -> String {
    match err {
        WtalError::Core(CoreError::Validation(problems)) => {
            let mut s = format!("validation failed with {} problem(s):", problems.len());
            for p in problems {
                s.push_str("\n  - ");
                s.push_str(p);
            }
            s
        }
        WtalError::VideoIo { video_id, source } => format!("video {video_id}: {}", describe(source)),
        other => other.to_string(),
    }
}

/// Parses `args` (program name first), runs the stage and returns the exit
/// code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.stage) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            err.exit_code()
        }
    }
}
