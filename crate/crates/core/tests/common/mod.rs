//! Reference implementations used only by tests. Each one recomputes a
//! quantity through plain loops, without calling the code path it checks.

#![allow(dead_code, clippy::needless_range_loop)]

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wtal_core::{ActionInstance, GroundTruthInstance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

/// Central finite differences of `f` at `x`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// `A[t][f] = sum_d x[t][d] W[d][f] + b[f]`, one entry at a time.
pub fn naive_cas(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; b.len()]; x.len()];
    for t in 0..x.len() {
        for f in 0..b.len() {
            let mut s = 0.0;
            for d in 0..w.len() {
                s += x[t][d] * w[d][f];
            }
            out[t][f] = s + b[f];
        }
    }
    out
}

/// Full sort, then mean of the first `k`.
pub fn sorted_topk_mean(col: &[f64], k: usize) -> f64 {
    let mut v = col.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v[..k].iter().sum::<f64>() / k as f64
}

pub fn naive_log_softmax_loss(scores: &[f64], y: &[u8]) -> f64 {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    let mut loss = 0.0;
    for (s, &yf) in scores.iter().zip(y) {
        if yf == 1 {
            let p = (s - m).exp() / z;
            loss -= p.max(1e-12).ln();
        }
    }
    loss
}

/// TS-PCA terms with explicit loops over `t`, `l`, `d`.
pub fn naive_tspca_terms(p: &[Vec<f64>], x: &[Vec<f64>]) -> (f64, f64, f64) {
    let (t_len, l_len, d_len) = (x.len(), p.len(), p[0].len());
    let proj = |l: usize, t: usize| -> f64 {
        let mut s = 0.0;
        for d in 0..d_len {
            s += p[l][d] * x[t][d];
        }
        s
    };
    let mut var = 0.0;
    for l in 0..l_len {
        let mut mean = 0.0;
        for m in 0..t_len {
            mean += proj(l, m);
        }
        mean /= t_len as f64;
        for t in 0..t_len {
            var += (proj(l, t) - mean).powi(2);
        }
    }
    let mut frob = 0.0;
    for i in 0..l_len {
        for j in 0..l_len {
            let mut g = 0.0;
            for d in 0..d_len {
                g += p[i][d] * p[j][d];
            }
            let id = if i == j { 1.0 } else { 0.0 };
            frob += (g - id).powi(2);
        }
    }
    let pro = -var / t_len as f64 + frob / (l_len * l_len) as f64;

    let mut recon = 0.0;
    for t in 0..t_len {
        for d in 0..d_len {
            let mut back = 0.0;
            for l in 0..l_len {
                back += proj(l, t) * p[l][d];
            }
            recon += (back - x[t][d]).powi(2);
        }
    }
    recon /= t_len as f64;

    let mut smooth = 0.0;
    if t_len > 1 {
        for t in 0..t_len - 1 {
            for l in 0..l_len {
                smooth += (proj(l, t + 1) - proj(l, t)).powi(2);
            }
        }
        smooth /= (t_len - 1) as f64;
    }
    (pro, recon, smooth)
}

fn oracle_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi <= lo {
        return 0.0;
    }
    (hi - lo) / (a.1.max(b.1) - a.0.min(b.0))
}

fn rank_cmp(a: &ActionInstance, b: &ActionInstance) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap()
        .then(a.start_sec.partial_cmp(&b.start_sec).unwrap())
        .then(a.video_id.cmp(&b.video_id))
        .then(a.class_index.cmp(&b.class_index))
        .then(a.end_sec.partial_cmp(&b.end_sec).unwrap())
}

/// Quadratic-time AP of a single class: for each prediction, candidate GTs
/// are visited in descending tIoU and the first unmatched one at or above the
/// threshold is taken; precision at every cutoff is recounted from scratch.
pub fn brute_force_ap(preds: &[ActionInstance], gts: &[GroundTruthInstance], thr: f64) -> Option<f64> {
    if gts.is_empty() {
        return if preds.is_empty() { None } else { Some(0.0) };
    }
    let mut ranked = preds.to_vec();
    ranked.sort_by(rank_cmp);
    let mut used = vec![false; gts.len()];
    let mut is_tp = vec![false; ranked.len()];
    for (i, p) in ranked.iter().enumerate() {
        let mut cands: Vec<(usize, f64)> = gts
            .iter()
            .enumerate()
            .filter(|(_, g)| g.video_id == p.video_id)
            .map(|(j, g)| (j, oracle_iou((p.start_sec, p.end_sec), (g.start_sec, g.end_sec))))
            .collect();
        cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (j, iou) in cands {
            if iou < thr {
                break;
            }
            if used[j] {
                continue;
            }
            used[j] = true;
            is_tp[i] = true;
            break;
        }
    }
    let n = ranked.len();
    let tp_upto = |k: usize| (0..k).filter(|&i| is_tp[i]).count();
    let prec: Vec<f64> = (1..=n).map(|k| tp_upto(k) as f64 / k as f64).collect();
    let mut total = 0.0;
    for k in 1..=n {
        let inc = tp_upto(k) - tp_upto(k - 1);
        let best = prec[k - 1..].iter().cloned().fold(0.0, f64::max);
        if inc == 1 {
            total += best;
        }
    }
    Some(total / gts.len() as f64)
}

/// Every `(s, e)` pair whose values are all `>= thr` and which cannot be
/// extended on either side.
pub fn brute_force_runs(values: &[f64], thr: f64) -> Vec<(usize, usize)> {
    let n = values.len();
    let mut out = Vec::new();
    for s in 0..n {
        for e in s..n {
            let inside = (s..=e).all(|t| values[t] >= thr);
            let left_closed = s == 0 || values[s - 1] < thr;
            let right_closed = e == n - 1 || values[e + 1] < thr;
            if inside && left_closed && right_closed {
                out.push((s, e));
            }
        }
    }
    out
}

pub fn naive_minmax(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn naive_contrast(values: &[f64], s: usize, e: usize, frac: f64) -> f64 {
    let len = e - s + 1;
    let inner: f64 = (s..=e).map(|t| values[t]).sum::<f64>() / len as f64;
    let m = (frac * len as f64).ceil() as usize;
    let mut flank = Vec::new();
    for t in s.saturating_sub(m)..s {
        flank.push(values[t]);
    }
    for t in (e + 1)..=(e + m) {
        if t < values.len() {
            flank.push(values[t]);
        }
    }
    let outer = if flank.is_empty() {
        0.0
    } else {
        flank.iter().sum::<f64>() / flank.len() as f64
    };
    inner - outer
}

/// O(n^2) greedy NMS: repeatedly scan for the best remaining instance.
pub fn quadratic_nms(instances: &[ActionInstance], thr: f64) -> Vec<ActionInstance> {
    let mut alive: Vec<bool> = vec![true; instances.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..instances.len() {
            if !alive[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (x, y) = (&instances[i], &instances[b]);
                    let better = x.score > y.score
                        || (x.score == y.score
                            && (x.start_sec < y.start_sec
                                || (x.start_sec == y.start_sec
                                    && (x.class_index < y.class_index
                                        || (x.class_index == y.class_index && x.end_sec < y.end_sec)))));
                    if better {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let Some(b) = best else { break };
        alive[b] = false;
        let keep = instances[b].clone();
        for i in 0..instances.len() {
            if alive[i]
                && instances[i].class_index == keep.class_index
                && instances[i].video_id == keep.video_id
                && oracle_iou((keep.start_sec, keep.end_sec), (instances[i].start_sec, instances[i].end_sec)) >= thr
            {
                alive[i] = false;
            }
        }
        out.push(keep);
    }
    out
}

/// Random single-class detection scenario over a few videos.
pub fn random_scenario(
    rng: &mut ChaCha8Rng,
    max_preds: usize,
    max_gts: usize,
) -> (Vec<ActionInstance>, Vec<GroundTruthInstance>) {
    let videos = ["va", "vb", "vc"];
    let n_gt = rng.random_range(0..=max_gts);
    let n_pred = rng.random_range(0..=max_preds);
    let interval = |rng: &mut ChaCha8Rng| {
        let s = rng.random_range(0.0..90.0);
        let len = rng.random_range(0.5..20.0);
        (s, s + len)
    };
    let gts = (0..n_gt)
        .map(|_| {
            let (s, e) = interval(rng);
            GroundTruthInstance {
                video_id: videos[rng.random_range(0..videos.len())].into(),
                class_index: 0,
                start_sec: s,
                end_sec: e,
            }
        })
        .collect::<Vec<_>>();
    let preds = (0..n_pred)
        .map(|_| {
            // Half of the predictions jitter an existing GT so matches occur.
            let (vid, s, e) = if !gts.is_empty() && rng.random_bool(0.5) {
                let g: &GroundTruthInstance = &gts[rng.random_range(0..gts.len())];
                let js = rng.random_range(-3.0..3.0);
                let je = rng.random_range(-3.0..3.0);
                let (s, e) = (g.start_sec + js, g.end_sec + je);
                let (s, e) = if e > s + 0.1 { (s, e) } else { (g.start_sec, g.end_sec) };
                (g.video_id.clone(), s, e)
            } else {
                let (s, e) = interval(rng);
                (videos[rng.random_range(0..videos.len())].to_string(), s, e)
            };
            ActionInstance {
                video_id: vid,
                class_index: 0,
                start_sec: s,
                end_sec: e,
                // Coarse scores so ties get exercised.
                score: (rng.random_range(0..20) as f64) / 20.0,
            }
        })
        .collect();
    (preds, gts)
}
