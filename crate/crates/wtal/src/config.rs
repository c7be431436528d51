//! Run configuration, in the same key/value syntax as manifests.
//!
//! Every key is optional. Relative paths resolve against the config file's
//! directory. Unknown or repeated keys are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use wtal_core::eval::{activitynet_thresholds, thumos_thresholds};
use wtal_core::{CalibrationConfig, PipelineConfig, SyntheticConfig};

use crate::error::{Result, WtalError};
use crate::text::{parse_kv, read_text, KvLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPreset {
    /// tIoU 0.1 to 0.9 in steps of 0.1.
    Thumos,
    /// tIoU 0.5 to 0.95 in steps of 0.05.
    ActivityNet,
}

impl EvalPreset {
    pub fn thresholds(self) -> Vec<f64> {
        match self {
            EvalPreset::Thumos => thumos_thresholds(),
            EvalPreset::ActivityNet => activitynet_thresholds(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "thumos" => Some(EvalPreset::Thumos),
            "activitynet" => Some(EvalPreset::ActivityNet),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out: PathBuf,
    pub synthetic: SyntheticConfig,
    /// When unset, stages read the manifests written by `gen`.
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub eval_preset: EvalPreset,
    /// Predictions file evaluated by `eval` instead of the pipeline outputs.
    pub predictions: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            synthetic: SyntheticConfig::default(),
            train_manifest: None,
            test_manifest: None,
            pipeline: PipelineConfig::default(),
            eval_preset: EvalPreset::Thumos,
            predictions: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&read_text(path)?, path, base)
    }

    /// `source` only labels error messages.
    pub fn parse(text: &str, source: &Path, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig {
            out: base.join("out"),
            ..RunConfig::default()
        };
        let mut seen = BTreeSet::new();
        let mut gamma: Option<f64> = None;
        let mut grid: Option<Vec<f64>> = None;
        let mut seed: Option<u64> = None;
        for l in parse_kv(text) {
            if !seen.insert(l.key.clone()) {
                return Err(WtalError::parse(source, l.line, format!("`{}` given twice", l.key)));
            }
            l.expect_args(source, 1)?;
            let path = || base.join(&l.args[0]);
            let s = &mut cfg.synthetic;
            let p = &mut cfg.pipeline;
            match l.key.as_str() {
                "out" => cfg.out = path(),
                "train_manifest" => cfg.train_manifest = Some(path()),
                "test_manifest" => cfg.test_manifest = Some(path()),
                "predictions" => cfg.predictions = Some(path()),
                "seed" => seed = Some(num(&l, source)?),
                "synth_n_train" => s.n_train = num(&l, source)?,
                "synth_n_test" => s.n_test = num(&l, source)?,
                "synth_segments" => s.segments = num(&l, source)?,
                "synth_dim" => s.dim = num(&l, source)?,
                "synth_classes" => s.num_classes = num(&l, source)?,
                "synth_contexts" => s.num_contexts = num(&l, source)?,
                "synth_context_strength" => s.context_strength = num(&l, source)?,
                "synth_noise_sigma" => s.noise_sigma = num(&l, source)?,
                "synth_fg_fraction" => s.fg_fraction = num(&l, source)?,
                "synth_seed" => s.seed = num(&l, source)?,
                "wtal_learning_rate" => p.wtal.learning_rate = num(&l, source)?,
                "wtal_momentum" => p.wtal.momentum = num(&l, source)?,
                "wtal_epochs" => p.wtal.epochs = num(&l, source)?,
                "wtal_weight_decay" => p.wtal.weight_decay = num(&l, source)?,
                "wtal_seed" => p.wtal.seed = num(&l, source)?,
                "k_divisor" => p.k_divisor = num(&l, source)?,
                "tspca_projectors" => p.tspca.projectors = num(&l, source)?,
                "tspca_lambda" => p.tspca.lambda = num(&l, source)?,
                "tspca_beta" => p.tspca.beta = num(&l, source)?,
                "tspca_learning_rate" => p.tspca.learning_rate = num(&l, source)?,
                "tspca_epochs" => p.tspca.epochs = num(&l, source)?,
                "tspca_seed" => p.tspca.seed = num(&l, source)?,
                "gamma" => gamma = Some(num(&l, source)?),
                "gamma_grid" => grid = Some(l.parse_list(source, 0, "gamma")?),
                "calibration_seed" => p.calibration.seed = num(&l, source)?,
                "thresholds" => p.localize.thresholds = l.parse_list(source, 0, "threshold")?,
                "video_class_threshold" => p.localize.video_class_threshold = num(&l, source)?,
                "nms_tiou" => p.localize.nms_tiou = num(&l, source)?,
                "outer_margin_fraction" => p.localize.outer_margin_fraction = num(&l, source)?,
                "eval_preset" => {
                    cfg.eval_preset = EvalPreset::parse(&l.args[0]).ok_or_else(|| {
                        WtalError::parse(source, l.line, format!("unknown preset `{}`", l.args[0]))
                    })?
                }
                other => return Err(WtalError::parse(source, l.line, format!("unknown key `{other}`"))),
            }
        }
        // An explicit grid sweeps; a lone gamma fixes it; neither keeps the
        // default sweep.
        let cal = &mut cfg.pipeline.calibration;
        match (gamma, grid) {
            (g, Some(grid)) => {
                cal.gamma_grid = grid;
                if let Some(g) = g {
                    cal.gamma = g;
                }
            }
            (Some(g), None) => *cal = CalibrationConfig { seed: cal.seed, ..CalibrationConfig::fixed(g) },
            (None, None) => {}
        }
        if let Some(seed) = seed {
            cfg.set_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides every seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.synthetic.seed = seed;
        self.pipeline.wtal.seed = seed;
        self.pipeline.tspca.seed = seed;
        self.pipeline.calibration.seed = seed;
    }

    /// Fixes gamma and disables the sweep.
    pub fn set_gamma(&mut self, gamma: f64) {
        let seed = self.pipeline.calibration.seed;
        self.pipeline.calibration = CalibrationConfig {
            seed,
            ..CalibrationConfig::fixed(gamma)
        };
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        p.wtal.validate()?;
        p.tspca.validate()?;
        p.calibration.validate()?;
        p.localize.validate()?;
        if p.k_divisor == 0 {
            return Err(wtal_core::Error::Config("k_divisor must be positive".into()).into());
        }
        if self.train_manifest.is_none() {
            self.synthetic.validate()?;
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(l: &KvLine, source: &Path) -> Result<T> {
    l.parse_arg(source, 0, "value")
}
