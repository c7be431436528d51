//! Baseline weakly-supervised localizer: a linear segment classifier producing
//! class activation sequences, top-k mean pooling to video scores, softmax,
//! and a per-class cross-entropy on the positive classes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, VideoFeatures, VideoLabel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probabilities below this are clamped before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

pub const DEFAULT_K_DIVISOR: usize = 8;

/// Class activation sequence of one video: `T x F` segment-by-class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Cas {
    pub video_id: String,
    pub scores: Matrix,
}

impl Cas {
    pub fn num_segments(&self) -> usize {
        self.scores.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.scores.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// `D x F`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub k_divisor: usize,
}

impl ClassifierParams {
    /// Uniform `[-1/sqrt(D), 1/sqrt(D)]` weights, zero bias.
    pub fn init(dim: usize, num_classes: usize, k_divisor: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(dim, num_classes, k_divisor, &mut rng)
    }

    fn init_with(dim: usize, num_classes: usize, k_divisor: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / libm::sqrt(dim as f64);
        let weights = Matrix::from_fn(dim, num_classes, |_, _| rng.random_range(-bound..=bound));
        Self {
            weights,
            bias: vec![0.0; num_classes],
            k_divisor,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 100,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub params: ClassifierParams,
    /// Mean per-video loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// `A = x W + b`, broadcasting `b` over segments.
pub fn cas_forward(params: &ClassifierParams, v: &VideoFeatures) -> Result<Cas> {
    if v.dim() != params.dim() {
        return Err(Error::shape(format!(
            "video {} has D={} but classifier expects D={}",
            v.video_id,
            v.dim(),
            params.dim()
        )));
    }
    if params.bias.len() != params.num_classes() {
        return Err(Error::shape("bias length differs from class count"));
    }
    let mut scores = v.features().matmul(&params.weights)?;
    for t in 0..scores.rows() {
        for (a, b) in scores.row_mut(t).iter_mut().zip(&params.bias) {
            *a += b;
        }
    }
    Ok(Cas {
        video_id: v.video_id.clone(),
        scores,
    })
}

/// Number of pooled segments: `max(1, ceil(T / k_divisor))`.
pub fn top_k(num_segments: usize, k_divisor: usize) -> usize {
    num_segments.div_ceil(k_divisor.max(1)).max(1).min(num_segments.max(1))
}

/// Indices of the `k` largest entries of column `f`, largest first; equal
/// values are ordered by segment index.
pub fn topk_indices(scores: &Matrix, f: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.rows()).collect();
    idx.sort_by(|&a, &b| scores[(b, f)].total_cmp(&scores[(a, f)]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Per-class mean of the `k` largest segment scores.
pub fn topk_aggregate(cas: &Cas, k_divisor: usize) -> Result<Vec<f64>> {
    let t_len = cas.num_segments();
    if t_len == 0 {
        return Err(Error::shape("cannot aggregate an empty CAS"));
    }
    let k = top_k(t_len, k_divisor);
    Ok((0..cas.num_classes())
        .map(|f| {
            let mut col = cas.scores.column(f);
            col.sort_by(|a, b| b.total_cmp(a));
            col[..k].iter().sum::<f64>() / k as f64
        })
        .collect())
}

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Video-level probabilities `softmax(topk(A))`.
pub fn video_probabilities(cas: &Cas, k_divisor: usize) -> Result<Vec<f64>> {
    Ok(softmax(&topk_aggregate(cas, k_divisor)?))
}

/// Cross-entropy `-sum_f y_f log p_f` with `p = softmax(scores)`, and its exact
/// gradient with respect to `scores`.
pub fn video_cls_loss(scores: &[f64], y: &VideoLabel) -> Result<(f64, Vec<f64>)> {
    if scores.len() != y.y.len() {
        return Err(Error::shape(format!(
            "{} scores for {} label entries",
            scores.len(),
            y.y.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite scores for {}", y.video_id)));
    }
    let p = softmax(scores);
    let mut loss = 0.0;
    // d/ds_j of -log p_f is p_j - [j == f]; clamped terms are constant.
    let mut active = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for (f, (&pf, &yf)) in p.iter().zip(&y.y).enumerate() {
        if yf == 0 {
            continue;
        }
        if pf < LOG_CLAMP {
            loss -= libm::log(LOG_CLAMP);
        } else {
            loss -= libm::log(pf);
            active += 1.0;
            grad[f] -= 1.0;
        }
    }
    for (g, pj) in grad.iter_mut().zip(&p) {
        *g += active * pj;
    }
    Ok((loss, grad))
}

/// Loss of one video and its gradient with respect to `W` and `b`, routing the
/// top-k subgradient through the selected segments only.
pub fn video_loss_and_grads(
    params: &ClassifierParams,
    v: &VideoFeatures,
    y: &VideoLabel,
) -> Result<(f64, Matrix, Vec<f64>)> {
    let cas = cas_forward(params, v)?;
    let k = top_k(v.num_segments(), params.k_divisor);
    let f_count = params.num_classes();
    let selected: Vec<Vec<usize>> = (0..f_count).map(|f| topk_indices(&cas.scores, f, k)).collect();
    let pooled: Vec<f64> = selected
        .iter()
        .enumerate()
        .map(|(f, idx)| idx.iter().map(|&t| cas.scores[(t, f)]).sum::<f64>() / k as f64)
        .collect();
    let (loss, g_scores) = video_cls_loss(&pooled, y)?;

    let x = v.features();
    let mut g_w = Matrix::zeros(params.dim(), f_count);
    for (f, idx) in selected.iter().enumerate() {
        let g = g_scores[f] / k as f64;
        if g == 0.0 {
            continue;
        }
        for &t in idx {
            for (d, &xv) in x.row(t).iter().enumerate() {
                g_w[(d, f)] += g * xv;
            }
        }
    }
    Ok((loss, g_w, g_scores))
}

/// Per-video momentum gradient descent over a seeded shuffle of `train`.
pub fn train_classifier(train: &Dataset, cfg: &TrainConfig, k_divisor: usize) -> Result<TrainedClassifier> {
    cfg.validate()?;
    if k_divisor == 0 {
        return Err(Error::config("k_divisor must be positive"));
    }
    let dim = train
        .feature_dim()
        .ok_or_else(|| Error::config("training set is empty"))?;
    let labels: Vec<&VideoLabel> = train
        .videos
        .iter()
        .map(|v| {
            train
                .label(&v.video_id)
                .ok_or_else(|| Error::config(format!("training video {} has no labels", v.video_id)))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ClassifierParams::init_with(dim, train.num_classes, k_divisor, &mut rng);
    let mut vel_w = Matrix::zeros(dim, train.num_classes);
    let mut vel_b = vec![0.0; train.num_classes];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let v = &train.videos[i];
            let (loss, mut g_w, g_b) = video_loss_and_grads(&params, v, labels[i])?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite classification loss at epoch {epoch}, video {}",
                    v.video_id
                )));
            }
            total += loss;
            g_w.add_scaled(&params.weights, cfg.weight_decay);
            vel_w.scale(cfg.momentum);
            vel_w.add_scaled(&g_w, 1.0);
            params.weights.add_scaled(&vel_w, -cfg.learning_rate);
            for ((b, vb), g) in params.bias.iter_mut().zip(vel_b.iter_mut()).zip(&g_b) {
                *vb = cfg.momentum * *vb + g;
                *b -= cfg.learning_rate * *vb;
            }
            if !params.weights.is_finite() || params.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Numerical(format!(
                    "classifier parameters diverged at epoch {epoch}, video {}",
                    v.video_id
                )));
            }
        }
        history.push(total / train.len() as f64);
    }

    Ok(TrainedClassifier {
        params,
        loss_history: history,
    })
}
