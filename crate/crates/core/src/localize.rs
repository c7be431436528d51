//! CAS to action instances: per-class min-max normalization, multi-threshold
//! run extraction with outer-inner contrast scoring, and temporal NMS.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::baseline::Cas;
use crate::dataset::VideoFeatures;
use crate::error::{Error, Result};
use crate::eval::interval_iou;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionInstance {
    pub video_id: String,
    pub class_index: usize,
    pub start_sec: f64,
    pub end_sec: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeConfig {
    pub thresholds: Vec<f64>,
    pub video_class_threshold: f64,
    pub nms_tiou: f64,
    pub outer_margin_fraction: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            thresholds: (1..=9).map(|i| i as f64 / 10.0).collect(),
            video_class_threshold: 0.1,
            nms_tiou: 0.5,
            outer_margin_fraction: 0.25,
        }
    }
}

impl LocalizeConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.thresholds.is_empty() || !self.thresholds.iter().all(|&t| open_unit(t)) {
            return Err(Error::config("localization thresholds must be a non-empty list in (0, 1)"));
        }
        if self.thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("localization thresholds must be sorted"));
        }
        if !open_unit(self.video_class_threshold) {
            return Err(Error::config("video_class_threshold must lie in (0, 1)"));
        }
        if !(self.nms_tiou > 0.0 && self.nms_tiou <= 1.0) {
            return Err(Error::config("nms_tiou must lie in (0, 1]"));
        }
        if !(self.outer_margin_fraction > 0.0 && self.outer_margin_fraction <= 1.0) {
            return Err(Error::config("outer_margin_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Min-max normalization to `[0, 1]`; a constant column maps to 0.5.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return alloc::vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / range).collect()
}

/// Maximal runs `[start, end]` (inclusive) of entries `>= threshold`.
pub fn runs_above(values: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, &v) in values.iter().enumerate() {
        match (v >= threshold, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push((s, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, values.len() - 1));
    }
    runs
}

/// Inner mean minus the mean over both flanks of length
/// `ceil(fraction * run_length)`, clipped to the video.
pub fn outer_inner_score(values: &[f64], start: usize, end: usize, fraction: f64) -> f64 {
    let len = end - start + 1;
    let inner = values[start..=end].iter().sum::<f64>() / len as f64;
    let margin = libm::ceil(fraction * len as f64) as usize;
    let left = start.saturating_sub(margin)..start;
    let right = (end + 1)..(end + 1 + margin).min(values.len());
    let count = left.len() + right.len();
    let outer = if count == 0 {
        0.0
    } else {
        (values[left].iter().sum::<f64>() + values[right].iter().sum::<f64>()) / count as f64
    };
    inner - outer
}

/// Pooled candidates over every threshold for every class whose video
/// probability passes `video_class_threshold`. No suppression is applied.
pub fn extract_instances(
    cas: &Cas,
    v: &VideoFeatures,
    video_probs: &[f64],
    cfg: &LocalizeConfig,
) -> Result<Vec<ActionInstance>> {
    if cas.num_segments() != v.num_segments() {
        return Err(Error::shape(alloc::format!(
            "CAS of {} has {} segments, video has {}",
            cas.video_id,
            cas.num_segments(),
            v.num_segments()
        )));
    }
    if video_probs.len() != cas.num_classes() {
        return Err(Error::shape(alloc::format!(
            "{} video probabilities for {} classes",
            video_probs.len(),
            cas.num_classes()
        )));
    }
    let sps = v.seconds_per_segment();
    let mut out = Vec::new();
    for (f, &prob) in video_probs.iter().enumerate() {
        if prob < cfg.video_class_threshold {
            continue;
        }
        let norm = minmax_normalize(&cas.scores.column(f));
        for &theta in &cfg.thresholds {
            for (s, e) in runs_above(&norm, theta) {
                out.push(ActionInstance {
                    video_id: v.video_id.clone(),
                    class_index: f,
                    start_sec: s as f64 * sps,
                    end_sec: (e + 1) as f64 * sps,
                    score: outer_inner_score(&norm, s, e, cfg.outer_margin_fraction),
                });
            }
        }
    }
    Ok(out)
}

/// Total order used to rank instances: score descending, then earlier start,
/// class index, earlier end, video id.
pub fn rank_order(a: &ActionInstance, b: &ActionInstance) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.start_sec.total_cmp(&b.start_sec))
        .then(a.class_index.cmp(&b.class_index))
        .then(a.end_sec.total_cmp(&b.end_sec))
        .then_with(|| a.video_id.cmp(&b.video_id))
}

/// Greedy per-class suppression of instances overlapping a kept one with
/// tIoU `>= nms_tiou`. Output is sorted by descending score.
pub fn nms(instances: &[ActionInstance], nms_tiou: f64) -> Vec<ActionInstance> {
    let mut sorted: Vec<&ActionInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| rank_order(a, b));
    let mut kept: Vec<ActionInstance> = Vec::new();
    for cand in sorted {
        let suppressed = kept.iter().any(|k| {
            k.class_index == cand.class_index
                && k.video_id == cand.video_id
                && interval_iou(k.start_sec, k.end_sec, cand.start_sec, cand.end_sec) >= nms_tiou
        });
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    kept
}

/// Candidates followed by NMS.
pub fn localize_video(
    cas: &Cas,
    v: &VideoFeatures,
    video_probs: &[f64],
    cfg: &LocalizeConfig,
) -> Result<Vec<ActionInstance>> {
    Ok(nms(&extract_instances(cas, v, video_probs, cfg)?, cfg.nms_tiou))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use alloc::vec;

    fn one_class(col: &[f64], sps: f64) -> (Cas, VideoFeatures) {
        let scores = Matrix::from_vec(col.len(), 1, col.to_vec()).unwrap();
        let v = VideoFeatures::new("v", Matrix::zeros(col.len(), 1), sps).unwrap();
        (
            Cas {
                video_id: "v".into(),
                scores,
            },
            v,
        )
    }

    fn inst(class: usize, s: f64, e: f64, score: f64) -> ActionInstance {
        ActionInstance {
            video_id: "v".into(),
            class_index: class,
            start_sec: s,
            end_sec: e,
            score,
        }
    }

    #[test]
    fn single_block_becomes_one_interval() {
        let (cas, v) = one_class(&[0.0, 0.0, 1.0, 1.0, 0.0], 2.0);
        let got = extract_instances(&cas, &v, &[1.0], &LocalizeConfig::default()).unwrap();
        assert_eq!(got.len(), 9);
        assert!(got.iter().all(|i| i.start_sec == 4.0 && i.end_sec == 8.0));
        // Margin ceil(0.25 * 2) = 1 on each side, both zero.
        assert!(got.iter().all(|i| i.score == 1.0));
        let kept = nms(&got, 0.5);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn low_video_probability_skips_class() {
        let (cas, v) = one_class(&[0.0, 1.0, 0.0], 1.0);
        assert!(extract_instances(&cas, &v, &[0.05], &LocalizeConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn constant_column_normalizes_to_half() {
        assert_eq!(minmax_normalize(&[3.0, 3.0]), vec![0.5, 0.5]);
        let (cas, v) = one_class(&[3.0; 4], 1.0);
        let got = extract_instances(&cas, &v, &[1.0], &LocalizeConfig::default()).unwrap();
        // Only thresholds <= 0.5 fire, each on the whole video with empty flanks.
        assert_eq!(got.len(), 5);
        assert!(got.iter().all(|i| i.start_sec == 0.0 && i.end_sec == 4.0 && i.score == 0.5));
    }

    #[test]
    fn runs_are_maximal() {
        assert_eq!(runs_above(&[1.0, 1.0, 0.0, 1.0], 0.5), vec![(0, 1), (3, 3)]);
        assert_eq!(runs_above(&[0.0, 0.0], 0.5), vec![]);
    }

    #[test]
    fn flanks_clip_to_video() {
        let values = [1.0, 1.0, 0.5, 0.0];
        // Run [0,1], margin 1: only the right flank {0.5} exists.
        assert_eq!(outer_inner_score(&values, 0, 1, 0.25), 0.5);
    }

    #[test]
    fn nms_basic_cases() {
        let a = inst(0, 0.0, 10.0, 0.9);
        assert_eq!(nms(&[a.clone(), a.clone()], 0.5).len(), 1);
        let b = inst(0, 20.0, 30.0, 0.8);
        assert_eq!(nms(&[b.clone(), a.clone()], 0.5), vec![a.clone(), b]);
        // Other classes are never suppressed.
        let c = inst(1, 0.0, 10.0, 0.5);
        assert_eq!(nms(&[a, c], 0.5).len(), 2);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (cas, _) = one_class(&[0.0, 1.0], 1.0);
        let v = VideoFeatures::new("v", Matrix::zeros(3, 1), 1.0).unwrap();
        assert!(extract_instances(&cas, &v, &[1.0], &LocalizeConfig::default()).is_err());
    }
}
