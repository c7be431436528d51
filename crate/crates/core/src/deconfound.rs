//! CAS calibration `A_hat = A + gamma * z` and the end-to-end pipeline: the
//! classifier and TS-PCA are trained separately, the projector bank is
//! oriented against the classifier's CAS, and every test video receives both
//! its raw and calibrated CAS.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseline::{
    cas_forward, train_classifier, video_probabilities, Cas, TrainConfig, TrainedClassifier, DEFAULT_K_DIVISOR,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::map_eval;
use crate::localize::{localize_video, ActionInstance, LocalizeConfig};
use crate::tspca::{confounder_score, orient_projectors, train_tspca, ConfounderScore, TrainedTspca, TspcaConfig};

/// IoU threshold used to pick gamma on the validation fifth.
pub const SELECTION_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub gamma: f64,
    /// Candidates for validation selection; used only with more than one entry.
    pub gamma_grid: Vec<f64>,
    /// Seed of the train/validation shuffle.
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            gamma_grid: alloc::vec![0.1, 0.2, 0.5, 1.0],
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn fixed(gamma: f64) -> Self {
        Self {
            gamma,
            gamma_grid: alloc::vec![gamma],
            ..Self::default()
        }
    }

    pub fn sweeps(&self) -> bool {
        self.gamma_grid.len() > 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config("gamma must be finite and non-negative"));
        }
        if self.gamma_grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("gamma grid entries must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub wtal: TrainConfig,
    pub k_divisor: usize,
    pub tspca: TspcaConfig,
    pub calibration: CalibrationConfig,
    pub localize: LocalizeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            wtal: TrainConfig::default(),
            k_divisor: DEFAULT_K_DIVISOR,
            tspca: TspcaConfig::default(),
            calibration: CalibrationConfig::default(),
            localize: LocalizeConfig::default(),
        }
    }
}

/// `A_hat[t][f] = A[t][f] + gamma * z[t]` for every class `f`.
pub fn calibrate(cas: &Cas, z: &ConfounderScore, gamma: f64) -> Result<Cas> {
    if cas.video_id != z.video_id {
        return Err(Error::shape(format!(
            "CAS of {} paired with confounder score of {}",
            cas.video_id, z.video_id
        )));
    }
    if z.z.len() != cas.num_segments() {
        return Err(Error::shape(format!(
            "confounder score has {} segments, CAS has {}",
            z.z.len(),
            cas.num_segments()
        )));
    }
    let mut out = cas.clone();
    for (t, &zt) in z.z.iter().enumerate() {
        out.scores.row_mut(t).iter_mut().for_each(|a| *a += gamma * zt);
    }
    Ok(out)
}

/// Per-test-video outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoOutputs {
    pub cas: Cas,
    pub confounder: ConfounderScore,
    pub calibrated: Cas,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub videos: Vec<VideoOutputs>,
    pub gamma: f64,
    /// `(gamma, validation mAP@0.5)` for each swept candidate.
    pub gamma_scores: Vec<(f64, f64)>,
    pub classifier: TrainedClassifier,
    /// Trained and oriented projector bank.
    pub tspca: TrainedTspca,
    pub warnings: Vec<String>,
}

/// Trains both models on `train` with no shared state and orients the bank
/// against the classifier's CAS.
pub fn fit_models(train: &Dataset, cfg: &PipelineConfig) -> Result<(TrainedClassifier, TrainedTspca)> {
    let classifier = train_classifier(train, &cfg.wtal, cfg.k_divisor)?;
    let mut tspca = train_tspca(&train.videos, &cfg.tspca)?;
    tspca.bank = orient_projectors(&tspca.bank, &train.videos, &classifier.params)?;
    Ok((classifier, tspca))
}

/// Raw CAS, confounder score and calibrated CAS for every video of `data`.
pub fn infer(
    data: &Dataset,
    classifier: &TrainedClassifier,
    tspca: &TrainedTspca,
    gamma: f64,
) -> Result<Vec<VideoOutputs>> {
    data.videos
        .iter()
        .map(|v| {
            let cas = cas_forward(&classifier.params, v)?;
            let confounder = confounder_score(&tspca.bank, v)?;
            let calibrated = calibrate(&cas, &confounder, gamma)?;
            Ok(VideoOutputs {
                cas,
                confounder,
                calibrated,
            })
        })
        .collect()
}

/// Localizes each video's CAS. Video-level class probabilities come from the
/// same CAS that is thresholded.
pub fn predict<'a>(
    data: &Dataset,
    cas: impl IntoIterator<Item = &'a Cas>,
    k_divisor: usize,
    cfg: &LocalizeConfig,
) -> Result<Vec<ActionInstance>> {
    let mut out = Vec::new();
    for a in cas {
        let v = data
            .video(&a.video_id)
            .ok_or_else(|| Error::shape(format!("no video {} for CAS", a.video_id)))?;
        let probs = video_probabilities(a, k_divisor)?;
        out.extend(localize_video(a, v, &probs, cfg)?);
    }
    Ok(out)
}

fn check_compatible(train: &Dataset, test: &Dataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if train.num_classes != test.num_classes {
        return Err(Error::shape(format!(
            "train has {} classes, test has {}",
            train.num_classes, test.num_classes
        )));
    }
    if let (Some(a), Some(b)) = (train.feature_dim(), test.feature_dim()) {
        if a != b {
            return Err(Error::shape(format!("train has D={a}, test has D={b}")));
        }
    }
    Ok(())
}

/// Seeded shuffle of `0..n`; the last fifth is validation.
pub fn validation_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = n / 5;
    let val = idx.split_off(n - n_val);
    (idx, val)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GammaSelection {
    /// Best gamma and the validation mAP@0.5 of every candidate.
    Selected { gamma: f64, scores: Vec<(f64, f64)> },
    Unavailable(String),
}

/// Picks gamma by validation mAP@0.5: both models are fitted on four fifths
/// of `train` and every candidate is scored on the remaining fifth. The first
/// candidate wins ties.
pub fn select_gamma(train: &Dataset, cfg: &PipelineConfig) -> Result<GammaSelection> {
    let (fit_idx, val_idx) = validation_split(train.len(), cfg.calibration.seed);
    if val_idx.is_empty() || fit_idx.is_empty() {
        return Ok(GammaSelection::Unavailable(format!(
            "{} training videos are too few for a validation fifth",
            train.len()
        )));
    }
    let val = train.subset(&val_idx);
    if val.ground_truth.is_empty() {
        return Ok(GammaSelection::Unavailable(String::from(
            "validation fifth has no ground truth",
        )));
    }
    let fit = train.subset(&fit_idx);
    let (classifier, tspca) = fit_models(&fit, cfg)?;
    let outputs = infer(&val, &classifier, &tspca, 0.0)?;

    let mut scores = Vec::with_capacity(cfg.calibration.gamma_grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &gamma in &cfg.calibration.gamma_grid {
        let cal = outputs
            .iter()
            .map(|o| calibrate(&o.cas, &o.confounder, gamma))
            .collect::<Result<Vec<_>>>()?;
        let preds = predict(&val, &cal, cfg.k_divisor, &cfg.localize)?;
        let result = map_eval(&preds, &val.ground_truth, val.num_classes, &[SELECTION_IOU])?;
        let m = result.map[0];
        scores.push((gamma, m));
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((gamma, m));
        }
    }
    Ok(GammaSelection::Selected {
        gamma: best.map_or(cfg.calibration.gamma, |b| b.0),
        scores,
    })
}

/// Chosen gamma, the `(gamma, validation mAP)` pairs behind it, and a warning
/// when the sweep fell back to the default.
pub type GammaChoice = (f64, Vec<(f64, f64)>, Option<String>);

/// Gamma for the pipeline with the validation scores behind it. When the
/// sweep cannot run, the default gamma is returned with a warning.
pub fn choose_gamma(train: &Dataset, cfg: &PipelineConfig) -> Result<GammaChoice> {
    if !cfg.calibration.sweeps() {
        let gamma = cfg.calibration.gamma_grid.first().copied().unwrap_or(cfg.calibration.gamma);
        return Ok((gamma, Vec::new(), None));
    }
    Ok(match select_gamma(train, cfg)? {
        GammaSelection::Selected { gamma, scores } => (gamma, scores, None),
        GammaSelection::Unavailable(reason) => {
            let msg = format!("{reason}; using default gamma {}", cfg.calibration.gamma);
            log::warn!("{msg}");
            (cfg.calibration.gamma, Vec::new(), Some(msg))
        }
    })
}

/// Trains the classifier (labels) and TS-PCA (features only) on `train`,
/// chooses gamma, and emits raw and calibrated CAS for every test video.
pub fn run_pipeline(train: &Dataset, test: &Dataset, cfg: &PipelineConfig) -> Result<PipelineResult> {
    check_compatible(train, test)?;
    cfg.calibration.validate()?;
    cfg.localize.validate()?;
    let mut warnings = Vec::new();

    let (gamma, gamma_scores, fallback) = choose_gamma(train, cfg)?;
    warnings.extend(fallback);

    let (classifier, tspca) = fit_models(train, cfg)?;
    if test.is_empty() {
        let msg = String::from("test set is empty; no CAS produced");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let videos = infer(test, &classifier, &tspca, gamma)?;
    Ok(PipelineResult {
        videos,
        gamma,
        gamma_scores,
        classifier,
        tspca,
        warnings,
    })
}

impl PipelineResult {
    pub fn raw_cas(&self) -> impl Iterator<Item = &Cas> {
        self.videos.iter().map(|o| &o.cas)
    }

    pub fn calibrated_cas(&self) -> impl Iterator<Item = &Cas> {
        self.videos.iter().map(|o| &o.calibrated)
    }
}
