//! Detection evaluation: temporal IoU, interpolated average precision with
//! greedy score-order matching, mAP over IoU threshold sweeps, and a reduced
//! false-positive error taxonomy over the top-5G predictions.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dataset::GroundTruthInstance;
use crate::error::{Error, Result};
use crate::localize::ActionInstance;

/// `0.1:0.1:0.9`.
pub fn thumos_thresholds() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// `0.5:0.05:0.95`.
pub fn activitynet_thresholds() -> Vec<f64> {
    (10..=19).map(|i| i as f64 / 20.0).collect()
}

/// tIoU of two intervals given by endpoints; 0 for disjoint or empty unions.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn interval_iou(s1: f64, e1: f64, s2: f64, e2: f64) -> f64 {
    let inter = e1.min(e2) - s1.max(s2);
    if !(inter > 0.0) {
        return 0.0;
    }
    inter / ((e1 - s1) + (e2 - s2) - inter)
}

/// Temporal IoU of `a = (start, end)` and `b`.
pub fn tiou(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for (s, e) in [a, b] {
        if !(s.is_finite() && e.is_finite() && s < e) {
            return Err(Error::Argument(alloc::format!("degenerate interval [{s}, {e}]")));
        }
    }
    Ok(interval_iou(a.0, a.1, b.0, b.1))
}

/// Ranking used by evaluation: score descending, then earlier start, then
/// video id, then class index, then earlier end.
pub fn eval_order(a: &ActionInstance, b: &ActionInstance) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.start_sec.total_cmp(&b.start_sec))
        .then_with(|| a.video_id.cmp(&b.video_id))
        .then(a.class_index.cmp(&b.class_index))
        .then(a.end_sec.total_cmp(&b.end_sec))
}

fn gt_iou(p: &ActionInstance, g: &GroundTruthInstance) -> f64 {
    if p.video_id != g.video_id {
        return 0.0;
    }
    interval_iou(p.start_sec, p.end_sec, g.start_sec, g.end_sec)
}

/// Best unmatched same-video, same-class ground truth for `p`; the first
/// index wins ties.
fn best_unmatched(p: &ActionInstance, gts: &[GroundTruthInstance], matched: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, g) in gts.iter().enumerate() {
        if matched[j] || g.class_index != p.class_index || g.video_id != p.video_id {
            continue;
        }
        let iou = gt_iou(p, g);
        if best.is_none_or(|(_, b)| iou > b) {
            best = Some((j, iou));
        }
    }
    best
}

/// Average precision of one class. `None` when there are neither predictions
/// nor ground truth (the class is then excluded from mAP).
pub fn average_precision(preds: &[ActionInstance], gts: &[GroundTruthInstance], iou_threshold: f64) -> Option<f64> {
    if gts.is_empty() {
        return if preds.is_empty() { None } else { Some(0.0) };
    }
    let mut order: Vec<&ActionInstance> = preds.iter().collect();
    order.sort_by(|a, b| eval_order(a, b));

    let mut matched = vec![false; gts.len()];
    let mut hits = Vec::with_capacity(order.len());
    for p in &order {
        let tp = match best_unmatched(p, gts, &matched) {
            Some((j, iou)) if iou >= iou_threshold => {
                matched[j] = true;
                true
            }
            _ => false,
        };
        hits.push(tp);
    }
    Some(interpolated_ap(&hits, gts.len()))
}

/// AP from the ranked TP/FP sequence: the sum over TP ranks of the running
/// maximum of precision taken from the bottom, divided by the GT count.
fn interpolated_ap(hits: &[bool], num_gt: usize) -> f64 {
    let mut tp = 0usize;
    let mut precision: Vec<f64> = hits
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            tp += usize::from(h);
            tp as f64 / (i + 1) as f64
        })
        .collect();
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let total: f64 = hits
        .iter()
        .zip(&precision)
        .filter(|(h, _)| **h)
        .fold(0.0, |acc, (_, p)| acc + p);
    total / num_gt as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub iou_thresholds: Vec<f64>,
    /// `ap[class][threshold]`; `None` marks an excluded class.
    pub ap: Vec<Vec<Option<f64>>>,
    /// mAP per threshold, over included classes.
    pub map: Vec<f64>,
    pub average_map: f64,
    pub num_ground_truth: usize,
    pub num_predictions: usize,
}

impl EvalResult {
    /// mAP at the threshold closest to `iou`, if one lies within 1e-9.
    pub fn map_at(&self, iou: f64) -> Option<f64> {
        self.iou_thresholds
            .iter()
            .position(|t| (t - iou).abs() < 1e-9)
            .map(|i| self.map[i])
    }
}

pub fn map_eval(
    preds: &[ActionInstance],
    gts: &[GroundTruthInstance],
    num_classes: usize,
    iou_thresholds: &[f64],
) -> Result<EvalResult> {
    if let Some(p) = preds.iter().find(|p| p.class_index >= num_classes) {
        return Err(Error::Argument(alloc::format!(
            "prediction class {} outside [0, {num_classes})",
            p.class_index
        )));
    }
    if let Some(g) = gts.iter().find(|g| g.class_index >= num_classes) {
        return Err(Error::Argument(alloc::format!(
            "ground-truth class {} outside [0, {num_classes})",
            g.class_index
        )));
    }
    let mut ap = Vec::with_capacity(num_classes);
    for f in 0..num_classes {
        let cp: Vec<ActionInstance> = preds.iter().filter(|p| p.class_index == f).cloned().collect();
        let cg: Vec<GroundTruthInstance> = gts.iter().filter(|g| g.class_index == f).cloned().collect();
        ap.push(
            iou_thresholds
                .iter()
                .map(|&thr| average_precision(&cp, &cg, thr))
                .collect::<Vec<_>>(),
        );
    }
    let map: Vec<f64> = (0..iou_thresholds.len())
        .map(|i| {
            let included: Vec<f64> = ap.iter().filter_map(|row| row[i]).collect();
            if included.is_empty() {
                0.0
            } else {
                included.iter().sum::<f64>() / included.len() as f64
            }
        })
        .collect();
    let average_map = if map.is_empty() {
        0.0
    } else {
        map.iter().sum::<f64>() / map.len() as f64
    };
    Ok(EvalResult {
        iou_thresholds: iou_thresholds.to_vec(),
        ap,
        map,
        average_map,
        num_ground_truth: gts.len(),
        num_predictions: preds.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCategory {
    TruePositive,
    OverCompleteness,
    Incompleteness,
    Confusion,
    Background,
    DoubleDetection,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::TruePositive,
        ErrorCategory::OverCompleteness,
        ErrorCategory::Incompleteness,
        ErrorCategory::Confusion,
        ErrorCategory::Background,
        ErrorCategory::DoubleDetection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::TruePositive => "true_positive",
            ErrorCategory::OverCompleteness => "over_completeness",
            ErrorCategory::Incompleteness => "incompleteness",
            ErrorCategory::Confusion => "confusion",
            ErrorCategory::Background => "background",
            ErrorCategory::DoubleDetection => "double_detection",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub iou_threshold: f64,
    pub num_ground_truth: usize,
    /// `min(5G, #predictions)`.
    pub analyzed: usize,
    /// Indexed like [`ErrorCategory::ALL`].
    pub counts: [usize; 6],
    /// Five score-ordered splits; percentages of each category within a split.
    pub quintiles: Vec<[f64; 6]>,
    /// Category of each analyzed prediction, in rank order.
    pub categories: Vec<ErrorCategory>,
}

impl ErrorProfile {
    pub fn count(&self, c: ErrorCategory) -> usize {
        self.counts[c.index()]
    }
}

fn classify_miss(
    p: &ActionInstance,
    gts: &[GroundTruthInstance],
    matched: &[bool],
    iou_threshold: f64,
) -> ErrorCategory {
    let same_video = || gts.iter().enumerate().filter(|(_, g)| g.video_id == p.video_id);
    if same_video().any(|(j, g)| matched[j] && g.class_index == p.class_index && gt_iou(p, g) >= iou_threshold) {
        return ErrorCategory::DoubleDetection;
    }
    if same_video().all(|(_, g)| gt_iou(p, g) == 0.0) {
        return ErrorCategory::Background;
    }
    if same_video().any(|(_, g)| g.class_index != p.class_index && gt_iou(p, g) >= iou_threshold) {
        return ErrorCategory::Confusion;
    }
    let mut best: Option<(&GroundTruthInstance, f64)> = None;
    for (_, g) in same_video().filter(|(_, g)| g.class_index == p.class_index) {
        let iou = gt_iou(p, g);
        if best.is_none_or(|(_, b)| iou > b) {
            best = Some((g, iou));
        }
    }
    let g = match best {
        Some((g, iou)) if iou > 0.0 => g,
        // Overlaps only other-class ground truth.
        _ => return ErrorCategory::Confusion,
    };
    let p_contains = p.start_sec <= g.start_sec && p.end_sec >= g.end_sec;
    let g_contains = g.start_sec <= p.start_sec && g.end_sec >= p.end_sec;
    if p_contains && !g_contains {
        return ErrorCategory::OverCompleteness;
    }
    if g_contains && !p_contains {
        return ErrorCategory::Incompleteness;
    }
    let inter = (p.end_sec.min(g.end_sec) - p.start_sec.max(g.start_sec)).max(0.0);
    let p_excess = (p.end_sec - p.start_sec) - inter;
    let g_excess = (g.end_sec - g.start_sec) - inter;
    if p_excess >= g_excess {
        ErrorCategory::OverCompleteness
    } else {
        ErrorCategory::Incompleteness
    }
}

/// Categorizes the top-5G predictions after greedy matching at
/// `iou_threshold`.
pub fn error_profile(preds: &[ActionInstance], gts: &[GroundTruthInstance], iou_threshold: f64) -> Result<ErrorProfile> {
    if gts.is_empty() {
        return Err(Error::Argument("error analysis needs at least one ground-truth instance".into()));
    }
    let mut order: Vec<&ActionInstance> = preds.iter().collect();
    order.sort_by(|a, b| eval_order(a, b));
    let analyzed = order.len().min(5 * gts.len());

    let mut matched = vec![false; gts.len()];
    let mut categories = Vec::with_capacity(analyzed);
    for p in order.iter().take(analyzed) {
        let cat = match best_unmatched(p, gts, &matched) {
            Some((j, iou)) if iou >= iou_threshold => {
                matched[j] = true;
                ErrorCategory::TruePositive
            }
            _ => classify_miss(p, gts, &matched, iou_threshold),
        };
        categories.push(cat);
    }

    let mut counts = [0usize; 6];
    for c in &categories {
        counts[c.index()] += 1;
    }
    let quintiles = (0..5)
        .map(|q| {
            let (lo, hi) = (q * analyzed / 5, (q + 1) * analyzed / 5);
            let mut pct = [0.0; 6];
            if hi > lo {
                for c in &categories[lo..hi] {
                    pct[c.index()] += 1.0;
                }
                pct.iter_mut().for_each(|v| *v *= 100.0 / (hi - lo) as f64);
            }
            pct
        })
        .collect();
    Ok(ErrorProfile {
        iou_threshold,
        num_ground_truth: gts.len(),
        analyzed,
        counts,
        quintiles,
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(video: &str, class: usize, s: f64, e: f64, score: f64) -> ActionInstance {
        ActionInstance {
            video_id: video.into(),
            class_index: class,
            start_sec: s,
            end_sec: e,
            score,
        }
    }

    fn gt(video: &str, class: usize, s: f64, e: f64) -> GroundTruthInstance {
        GroundTruthInstance {
            video_id: video.into(),
            class_index: class,
            start_sec: s,
            end_sec: e,
        }
    }

    #[test]
    fn tiou_hand_cases() {
        assert_eq!(tiou((10.0, 20.0), (15.0, 25.0)).unwrap(), 5.0 / 15.0);
        assert_eq!(tiou((3.0, 7.5), (3.0, 7.5)).unwrap(), 1.0);
        assert_eq!(tiou((0.0, 1.0), (2.0, 3.0)).unwrap(), 0.0);
        assert_eq!(tiou((0.0, 1.0), (1.0, 3.0)).unwrap(), 0.0);
        assert!(tiou((1.0, 1.0), (0.0, 2.0)).is_err());
    }

    #[test]
    fn ap_single_match() {
        let g = [gt("a", 0, 0.0, 10.0)];
        assert_eq!(average_precision(&[pred("a", 0, 0.0, 9.0, 0.5)], &g, 0.5), Some(1.0));
    }

    #[test]
    fn ap_second_overlap_is_false_positive_after_peak() {
        let g = [gt("a", 0, 0.0, 10.0)];
        let p = [pred("a", 0, 0.0, 9.0, 0.9), pred("a", 0, 1.0, 10.0, 0.8)];
        assert_eq!(average_precision(&p, &g, 0.5), Some(1.0));
    }

    #[test]
    fn ap_empty_cases() {
        assert_eq!(average_precision(&[], &[], 0.5), None);
        assert_eq!(average_precision(&[pred("a", 0, 0.0, 1.0, 1.0)], &[], 0.5), Some(0.0));
        assert_eq!(average_precision(&[], &[gt("a", 0, 0.0, 1.0)], 0.5), Some(0.0));
    }

    #[test]
    fn ap_respects_video_boundaries() {
        let g = [gt("a", 0, 0.0, 10.0)];
        assert_eq!(average_precision(&[pred("b", 0, 0.0, 10.0, 1.0)], &g, 0.5), Some(0.0));
    }

    #[test]
    fn map_perfect_and_empty() {
        let g = vec![gt("a", 0, 0.0, 10.0), gt("a", 1, 12.0, 20.0), gt("b", 0, 3.0, 4.0)];
        let p: Vec<_> = g
            .iter()
            .map(|g| pred(&g.video_id, g.class_index, g.start_sec, g.end_sec, 1.0))
            .collect();
        let r = map_eval(&p, &g, 3, &thumos_thresholds()).unwrap();
        assert!(r.map.iter().all(|&m| m == 1.0));
        // Class 2 has neither predictions nor ground truth.
        assert!(r.ap[2].iter().all(Option::is_none));
        let r = map_eval(&[], &g, 3, &activitynet_thresholds()).unwrap();
        assert!(r.map.iter().all(|&m| m == 0.0));
        assert_eq!(r.map.len(), 10);
    }

    #[test]
    fn error_categories_by_definition() {
        let g = vec![gt("a", 0, 10.0, 20.0), gt("a", 1, 40.0, 50.0)];
        let preds = vec![
            pred("a", 0, 0.0, 30.0, 0.9),   // strictly contains, tIoU 1/3
            pred("a", 0, 60.0, 70.0, 0.8),  // disjoint from everything
            pred("a", 0, 41.0, 50.0, 0.7),  // other-class overlap 0.9
            pred("a", 0, 12.0, 14.0, 0.6),  // strictly inside
            pred("a", 0, 10.0, 20.0, 0.5),  // true positive
            pred("a", 0, 10.0, 19.0, 0.4),  // duplicate of matched GT
        ];
        let prof = error_profile(&preds, &g, 0.5).unwrap();
        use ErrorCategory::*;
        assert_eq!(
            prof.categories,
            vec![OverCompleteness, Background, Confusion, Incompleteness, TruePositive, DoubleDetection]
        );
        assert_eq!(prof.analyzed, 6);
        assert_eq!(prof.counts.iter().sum::<usize>(), 6);
        assert!(error_profile(&preds, &[], 0.5).is_err());
    }

    #[test]
    fn one_sided_excess_decides_partial_overlaps() {
        let g = vec![gt("a", 0, 10.0, 20.0)];
        // Shifted right by 8: excess 8 on both sides; tie -> over-completeness.
        let p = vec![pred("a", 0, 18.0, 28.0, 1.0)];
        assert_eq!(error_profile(&p, &g, 0.5).unwrap().categories, vec![ErrorCategory::OverCompleteness]);
        // Longer prediction sticking out: more prediction excess.
        let p = vec![pred("a", 0, 15.0, 40.0, 1.0)];
        assert_eq!(error_profile(&p, &g, 0.5).unwrap().categories, vec![ErrorCategory::OverCompleteness]);
        let p = vec![pred("a", 0, 17.0, 21.0, 1.0)];
        assert_eq!(error_profile(&p, &g, 0.5).unwrap().categories, vec![ErrorCategory::Incompleteness]);
    }

    #[test]
    fn quintiles_cover_top_five_g() {
        let g = vec![gt("a", 0, 0.0, 1.0)];
        let preds: Vec<_> = (0..12).map(|i| pred("a", 0, 100.0 + i as f64, 101.0 + i as f64, i as f64)).collect();
        let prof = error_profile(&preds, &g, 0.5).unwrap();
        assert_eq!(prof.analyzed, 5);
        assert_eq!(prof.quintiles.len(), 5);
        for q in &prof.quintiles {
            assert_eq!(q[ErrorCategory::Background.index()], 100.0);
        }
    }
}
