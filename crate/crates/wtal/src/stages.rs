//! Pipeline stages as file-to-file steps inside one output directory.
//!
//! | stage         | reads                                   | writes                                             |
//! |---------------|-----------------------------------------|----------------------------------------------------|
//! | `gen`         | config                                  | `train.manifest`, `test.manifest`, `features/`      |
//! | `train-wtal`  | train manifest                          | `wtal.wtcp`, `wtal_loss.csv`                        |
//! | `train-tspca` | train manifest, `wtal.wtcp`             | `tspca.tspc`, `tspca_loss.csv`                      |
//! | `calibrate`   | test (and train) manifest, both models  | `calibration.kv`, `cas_*.txt`, `confounder.txt`, `cas/` |
//! | `localize`    | test manifest, `cas_*.txt`              | `predictions_{baseline,calibrated}.txt`            |
//! | `eval`        | test manifest, predictions              | `eval_*.txt`, `eval_*.kv`, `errors_*.kv`            |
//! | `report`      | eval outputs, CAS and confounder dumps  | `report_map.csv`, `report_errors.csv`, `traces/`    |
//!
//! `run-all` runs the same steps in memory and writes the same files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use wtal_core::deconfound::{choose_gamma, infer, predict, VideoOutputs};
use wtal_core::eval::ErrorCategory;
use wtal_core::tspca::{orient_projectors, TrainedTspca};
use wtal_core::{
    error_profile, generate_synthetic, map_eval, run_pipeline, train_classifier, Cas, Dataset, ErrorProfile,
    EvalResult, TrainedClassifier,
};

use crate::binary::{read_bank, read_params, write_bank, write_cas_binary, write_params};
use crate::config::RunConfig;
use crate::error::{Result, WtalError};
use crate::manifest::{load_dataset, write_dataset};
use crate::text::{
    format_error_profile, format_eval_kv, format_eval_table, read_cas_text, read_confounder_text, read_error_profile,
    read_eval_kv, read_kv, read_predictions, write_cas_text, write_confounder_text, write_predictions, write_text,
};

pub const TRAIN_MANIFEST: &str = "train.manifest";
pub const TEST_MANIFEST: &str = "test.manifest";
pub const PARAMS: &str = "wtal.wtcp";
pub const WTAL_LOSS: &str = "wtal_loss.csv";
pub const BANK: &str = "tspca.tspc";
pub const TSPCA_LOSS: &str = "tspca_loss.csv";
pub const CALIBRATION: &str = "calibration.kv";
pub const CAS_RAW: &str = "cas_raw.txt";
pub const CAS_CALIBRATED: &str = "cas_calibrated.txt";
pub const CONFOUNDER: &str = "confounder.txt";
pub const CAS_DIR: &str = "cas";
pub const TRACE_DIR: &str = "traces";
pub const REPORT_MAP: &str = "report_map.csv";
pub const REPORT_ERRORS: &str = "report_errors.csv";
/// The uncalibrated control run and the calibrated run.
pub const RUNS: [&str; 2] = ["baseline", "calibrated"];
/// tIoU of the error analysis.
pub const ERROR_IOU: f64 = 0.5;

pub fn predictions_file(run: &str) -> String {
    format!("predictions_{run}.txt")
}

pub fn eval_table_file(run: &str) -> String {
    format!("eval_{run}.txt")
}

pub fn eval_kv_file(run: &str) -> String {
    format!("eval_{run}.kv")
}

pub fn errors_file(run: &str) -> String {
    format!("errors_{run}.kv")
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| WtalError::io(path, e))
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(WtalError::MissingStage { stage, path })
    }
}

/// Video ids become file names for per-video outputs.
fn file_stem(id: &str) -> Result<&str> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
        return Err(WtalError::Usage(format!("video id `{id}` cannot be used as a file name")));
    }
    Ok(id)
}

fn train_manifest(cfg: &RunConfig) -> Result<PathBuf> {
    match &cfg.train_manifest {
        Some(p) => Ok(p.clone()),
        None => require(out(cfg, TRAIN_MANIFEST), "gen"),
    }
}

fn test_manifest(cfg: &RunConfig) -> Result<PathBuf> {
    match &cfg.test_manifest {
        Some(p) => Ok(p.clone()),
        None => require(out(cfg, TEST_MANIFEST), "gen"),
    }
}

pub fn load_train(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(&train_manifest(cfg)?)
}

pub fn load_test(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(&test_manifest(cfg)?)
}

fn loss_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        writeln!(s, "{i},{l}").unwrap();
    }
    s
}

pub fn gen(cfg: &RunConfig) -> Result<()> {
    ensure_dir(&cfg.out)?;
    let (train, test) = generate_synthetic(&cfg.synthetic)?;
    write_dataset(&train, &cfg.out, "train")?;
    write_dataset(&test, &cfg.out, "test")?;
    Ok(())
}

fn write_classifier(cfg: &RunConfig, c: &TrainedClassifier) -> Result<()> {
    ensure_dir(&cfg.out)?;
    write_params(&c.params, &out(cfg, PARAMS))?;
    write_text(&out(cfg, WTAL_LOSS), &loss_csv(&c.loss_history))
}

fn write_tspca(cfg: &RunConfig, t: &TrainedTspca) -> Result<()> {
    ensure_dir(&cfg.out)?;
    write_bank(&t.bank, &out(cfg, BANK))?;
    write_text(&out(cfg, TSPCA_LOSS), &loss_csv(&t.loss_history))
}

pub fn train_wtal(cfg: &RunConfig) -> Result<()> {
    let train = load_train(cfg)?;
    let p = &cfg.pipeline;
    write_classifier(cfg, &train_classifier(&train, &p.wtal, p.k_divisor)?)
}

pub fn train_tspca(cfg: &RunConfig) -> Result<()> {
    let train = load_train(cfg)?;
    let mut trained = wtal_core::train_tspca(&train.videos, &cfg.pipeline.tspca)?;
    let params = read_params(&require(out(cfg, PARAMS), "train-wtal")?)?;
    trained.bank = orient_projectors(&trained.bank, &train.videos, &params)?;
    write_tspca(cfg, &trained)
}

fn write_calibration(
    cfg: &RunConfig,
    gamma: f64,
    scores: &[(f64, f64)],
    warnings: &[String],
    videos: &[VideoOutputs],
) -> Result<()> {
    ensure_dir(&cfg.out)?;
    let mut kv = String::new();
    for w in warnings {
        writeln!(kv, "# warning: {w}").unwrap();
    }
    writeln!(kv, "gamma {gamma}").unwrap();
    for (g, m) in scores {
        writeln!(kv, "gamma_score {g} {m}").unwrap();
    }
    write_text(&out(cfg, CALIBRATION), &kv)?;
    write_cas_text(videos.iter().map(|v| &v.cas), &out(cfg, CAS_RAW))?;
    write_cas_text(videos.iter().map(|v| &v.calibrated), &out(cfg, CAS_CALIBRATED))?;
    write_confounder_text(videos.iter().map(|v| &v.confounder), &out(cfg, CONFOUNDER))?;
    let dir = out(cfg, CAS_DIR);
    ensure_dir(&dir)?;
    for v in videos {
        let stem = file_stem(&v.cas.video_id)?;
        write_cas_binary(&v.cas, &dir.join(format!("{stem}.raw.wcas")))?;
        write_cas_binary(&v.calibrated, &dir.join(format!("{stem}.calibrated.wcas")))?;
    }
    Ok(())
}

/// Gamma recorded by `calibrate`.
pub fn read_gamma(cfg: &RunConfig) -> Result<f64> {
    let path = require(out(cfg, CALIBRATION), "calibrate")?;
    for l in read_kv(&path)? {
        if l.key == "gamma" {
            return l.parse_arg(&path, 0, "gamma");
        }
    }
    Err(WtalError::format(&path, "gamma", "missing"))
}

pub fn calibrate(cfg: &RunConfig) -> Result<()> {
    let test = load_test(cfg)?;
    let params = read_params(&require(out(cfg, PARAMS), "train-wtal")?)?;
    let bank = read_bank(&require(out(cfg, BANK), "train-tspca")?)?;
    let (gamma, scores, warning) = if cfg.pipeline.calibration.sweeps() {
        choose_gamma(&load_train(cfg)?, &cfg.pipeline)?
    } else {
        // Without a sweep no data is consulted.
        choose_gamma(&test, &cfg.pipeline)?
    };
    let classifier = TrainedClassifier {
        params,
        loss_history: Vec::new(),
    };
    let tspca = TrainedTspca {
        orthogonality_error: bank.orthogonality_error(),
        bank,
        loss_history: Vec::new(),
    };
    let videos = infer(&test, &classifier, &tspca, gamma)?;
    write_calibration(cfg, gamma, &scores, &warning.into_iter().collect::<Vec<_>>(), &videos)
}

pub fn localize(cfg: &RunConfig) -> Result<()> {
    let test = load_test(cfg)?;
    let p = &cfg.pipeline;
    for (run, file) in RUNS.iter().zip([CAS_RAW, CAS_CALIBRATED]) {
        let cas: Vec<Cas> = read_cas_text(&require(out(cfg, file), "calibrate")?)?;
        let preds = predict(&test, &cas, p.k_divisor, &p.localize)?;
        write_predictions(&preds, &out(cfg, &predictions_file(run)))?;
    }
    Ok(())
}

fn eval_runs(cfg: &RunConfig) -> Result<Vec<(String, PathBuf)>> {
    match &cfg.predictions {
        Some(p) => Ok(vec![("custom".to_string(), p.clone())]),
        None => RUNS
            .iter()
            .map(|r| Ok((r.to_string(), require(out(cfg, &predictions_file(r)), "localize")?)))
            .collect(),
    }
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let test = load_test(cfg)?;
    ensure_dir(&cfg.out)?;
    let thresholds = cfg.eval_preset.thresholds();
    for (run, path) in eval_runs(cfg)? {
        let preds = read_predictions(&path)?;
        let res: EvalResult = map_eval(&preds, &test.ground_truth, test.num_classes, &thresholds)?;
        write_text(&out(cfg, &eval_table_file(&run)), &format_eval_table(&res))?;
        write_text(&out(cfg, &eval_kv_file(&run)), &format_eval_kv(&res))?;
        let errors = out(cfg, &errors_file(&run));
        if test.ground_truth.is_empty() {
            log::warn!("no ground truth in the test set; skipping error analysis for {run}");
            if errors.exists() {
                fs::remove_file(&errors).map_err(|e| WtalError::io(&errors, e))?;
            }
        } else {
            let profile = error_profile(&preds, &test.ground_truth, ERROR_IOU)?;
            write_text(&errors, &format_error_profile(&profile))?;
        }
    }
    Ok(())
}

fn max_row(m: &wtal_core::Matrix, t: usize) -> f64 {
    m.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// One column per tIoU threshold, values in mAP points.
pub fn format_map_report(baseline: &EvalResult, calibrated: &EvalResult) -> Result<String> {
    if baseline.iou_thresholds != calibrated.iou_thresholds {
        return Err(WtalError::Usage("baseline and calibrated evaluations use different thresholds".into()));
    }
    let mut s = String::from("method");
    for t in &baseline.iou_thresholds {
        write!(s, ",{t:.2}").unwrap();
    }
    s.push('\n');
    let mut row = |name: &str, vals: Vec<f64>| {
        s.push_str(name);
        for v in vals {
            write!(s, ",{:.2}", 100.0 * v).unwrap();
        }
        s.push('\n');
    };
    row("baseline", baseline.map.clone());
    row("+TP", calibrated.map.clone());
    row(
        "Abs. Improve",
        calibrated.map.iter().zip(&baseline.map).map(|(c, b)| c - b).collect(),
    );
    Ok(s)
}

pub fn format_error_report(profiles: &[(&str, &ErrorProfile)]) -> String {
    let mut s = String::from("run,split");
    for c in ErrorCategory::ALL {
        write!(s, ",{}", c.name()).unwrap();
    }
    s.push('\n');
    for (run, p) in profiles {
        write!(s, "{run},count").unwrap();
        for c in p.counts {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for (i, q) in p.quintiles.iter().enumerate() {
            write!(s, "{run},q{}", i + 1).unwrap();
            for v in q {
                write!(s, ",{v:.2}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let evals = RUNS
        .iter()
        .map(|r| read_eval_kv(&require(out(cfg, &eval_kv_file(r)), "eval")?))
        .collect::<Result<Vec<_>>>()?;
    write_text(&out(cfg, REPORT_MAP), &format_map_report(&evals[0], &evals[1])?)?;

    if evals[0].num_ground_truth > 0 {
        let profiles = RUNS
            .iter()
            .map(|r| read_error_profile(&require(out(cfg, &errors_file(r)), "eval")?))
            .collect::<Result<Vec<_>>>()?;
        let named: Vec<(&str, &ErrorProfile)> = RUNS.iter().copied().zip(&profiles).collect();
        write_text(&out(cfg, REPORT_ERRORS), &format_error_report(&named))?;
    }

    let raw = read_cas_text(&require(out(cfg, CAS_RAW), "calibrate")?)?;
    let cal = read_cas_text(&require(out(cfg, CAS_CALIBRATED), "calibrate")?)?;
    let z = read_confounder_text(&require(out(cfg, CONFOUNDER), "calibrate")?)?;
    let dir = out(cfg, TRACE_DIR);
    ensure_dir(&dir)?;
    for ((a, c), zs) in raw.iter().zip(&cal).zip(&z) {
        if a.video_id != c.video_id || a.video_id != zs.video_id || zs.z.len() != a.num_segments() {
            return Err(WtalError::Usage(format!(
                "CAS and confounder dumps disagree at video {}",
                a.video_id
            )));
        }
        let mut s = String::from("t,max_class_cas,z,max_class_calibrated\n");
        for t in 0..a.num_segments() {
            writeln!(s, "{t},{},{},{}", max_row(&a.scores, t), zs.z[t], max_row(&c.scores, t)).unwrap();
        }
        write_text(&dir.join(format!("{}.csv", file_stem(&a.video_id)?)), &s)?;
    }
    Ok(())
}

/// Generates data unless manifests are configured, runs the calibrated and
/// uncalibrated pipelines, and writes every stage's outputs.
pub fn run_all(cfg: &RunConfig) -> Result<()> {
    if cfg.train_manifest.is_none() || cfg.test_manifest.is_none() {
        gen(cfg)?;
    }
    let train = load_train(cfg)?;
    let test = load_test(cfg)?;
    let res = run_pipeline(&train, &test, &cfg.pipeline)?;
    write_classifier(cfg, &res.classifier)?;
    write_tspca(cfg, &res.tspca)?;
    write_calibration(cfg, res.gamma, &res.gamma_scores, &res.warnings, &res.videos)?;
    localize(cfg)?;
    eval(cfg)?;
    report(cfg)
}
