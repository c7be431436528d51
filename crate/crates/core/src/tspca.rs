//! Temporal-smoothing PCA (TS-PCA).
//!
//! Learns `L` projectors from unlabeled features by minimizing, per video,
//!
//! ```text
//! pro    = -(1/T) sum_t sum_l (p_l.x_t - mean_m p_l.x_m)^2 + (1/L^2) ||P P^T - I||_F^2
//! recon  =  (1/T) sum_t || sum_l (p_l.x_t) p_l - x_t ||^2
//! smooth =  (1/(T-1)) sum_t sum_l (p_l.x_{t+1} - p_l.x_t)^2
//! total  =  pro + lambda * recon + beta * smooth
//! ```
//!
//! The substitute confounder of a video is the per-segment mean projection
//! `z~_t = (1/L) sum_l p_l.x_t`, standardized per video and multiplied by the
//! bank's orientation sign.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baseline::{cas_forward, Cas, ClassifierParams};
use crate::dataset::VideoFeatures;
use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::matrix::{dot, orthonormalize_rows, Matrix};

pub const DEFAULT_PROJECTORS: usize = 5;

/// Standard deviations at or below this standardize to the zero vector.
pub const STD_FLOOR: f64 = 1e-12;

/// Largest feature dimension accepted by [`exact_pca_oracle`].
pub const ORACLE_MAX_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorBank {
    /// `L x D`, one projector per row.
    pub projectors: Matrix,
    pub lambda: f64,
    pub beta: f64,
    /// `+1` or `-1`.
    pub orientation: i8,
}

impl ProjectorBank {
    pub fn new(projectors: Matrix, lambda: f64, beta: f64, orientation: i8) -> Result<Self> {
        if projectors.rows() == 0 || projectors.cols() == 0 {
            return Err(Error::config("projector bank needs L >= 1 and D >= 1"));
        }
        if !projectors.is_finite() || !lambda.is_finite() || !beta.is_finite() {
            return Err(Error::Numerical("projector bank has non-finite entries".into()));
        }
        if lambda < 0.0 || beta < 0.0 {
            return Err(Error::config("lambda and beta must be non-negative"));
        }
        if orientation != 1 && orientation != -1 {
            return Err(Error::config(format!("orientation must be +1 or -1, got {orientation}")));
        }
        Ok(Self {
            projectors,
            lambda,
            beta,
            orientation,
        })
    }

    pub fn num_projectors(&self) -> usize {
        self.projectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.projectors.cols()
    }

    /// `||P P^T - I||_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut g = self.projectors.gram_rows();
        for i in 0..g.rows() {
            g[(i, i)] -= 1.0;
        }
        g.frobenius_norm()
    }

    pub fn with_orientation(mut self, orientation: i8) -> Self {
        self.orientation = if orientation < 0 { -1 } else { 1 };
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TspcaConfig {
    pub projectors: usize,
    pub lambda: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TspcaConfig {
    fn default() -> Self {
        Self {
            projectors: DEFAULT_PROJECTORS,
            lambda: 1.0,
            beta: 1.0,
            learning_rate: 0.005,
            epochs: 500,
            seed: 0,
        }
    }
}

impl TspcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.projectors == 0 {
            return Err(Error::config("number of projectors must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite() && self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("lambda and beta must be non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("TS-PCA learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TspcaLosses {
    pub pro: f64,
    pub recon: f64,
    pub smooth: f64,
}

impl TspcaLosses {
    pub fn total(&self, lambda: f64, beta: f64) -> f64 {
        self.pro + lambda * self.recon + beta * self.smooth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedTspca {
    pub bank: ProjectorBank,
    /// Mean per-video total loss of each epoch.
    pub loss_history: Vec<f64>,
    /// `||P P^T - I||_F` of the returned bank.
    pub orthogonality_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderScore {
    pub video_id: String,
    pub z: Vec<f64>,
}

/// Orthonormal rows from Gram-Schmidt on i.i.d. Gaussian draws.
pub fn init_projectors(num_projectors: usize, dim: usize, seed: u64) -> Result<ProjectorBank> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with(num_projectors, dim, &mut rng)
}

fn init_with(num_projectors: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<ProjectorBank> {
    if num_projectors == 0 || num_projectors > dim {
        return Err(Error::config(format!(
            "need 1 <= L <= D for projector initialization, got L={num_projectors}, D={dim}"
        )));
    }
    loop {
        let mut p = Matrix::from_fn(num_projectors, dim, |_, _| rng.sample(StandardNormal));
        if orthonormalize_rows(&mut p) {
            return ProjectorBank::new(p, 0.0, 0.0, 1);
        }
    }
}

fn check_dim(bank: &ProjectorBank, v: &VideoFeatures) -> Result<()> {
    if bank.dim() != v.dim() {
        return Err(Error::shape(format!(
            "video {} has D={} but projectors have D={}",
            v.video_id,
            v.dim(),
            bank.dim()
        )));
    }
    Ok(())
}

/// `T x L` matrix of projections `p_l . x_t`.
fn projections(bank: &ProjectorBank, v: &VideoFeatures) -> Matrix {
    let x = v.features();
    let p = &bank.projectors;
    Matrix::from_fn(x.rows(), p.rows(), |t, l| dot(x.row(t), p.row(l)))
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; m.cols()];
    for t in 0..m.rows() {
        for (acc, v) in means.iter_mut().zip(m.row(t)) {
            *acc += v;
        }
    }
    means.iter_mut().for_each(|v| *v /= m.rows() as f64);
    means
}

/// `P P^T - I`.
fn gram_residual(p: &Matrix) -> Matrix {
    let mut g = p.gram_rows();
    for i in 0..g.rows() {
        g[(i, i)] -= 1.0;
    }
    g
}

pub fn tspca_losses(bank: &ProjectorBank, v: &VideoFeatures) -> Result<TspcaLosses> {
    check_dim(bank, v)?;
    let x = v.features();
    let p = &bank.projectors;
    let (t_len, l_len) = (x.rows(), p.rows());
    let u = projections(bank, v);
    let means = column_means(&u);

    let mut variance = 0.0;
    for t in 0..t_len {
        for l in 0..l_len {
            let c = u[(t, l)] - means[l];
            variance += c * c;
        }
    }
    let ortho = gram_residual(p).frobenius_norm();
    let pro = -variance / t_len as f64 + ortho * ortho / (l_len * l_len) as f64;

    let mut recon = 0.0;
    for t in 0..t_len {
        for d in 0..x.cols() {
            let back: f64 = (0..l_len).map(|l| u[(t, l)] * p[(l, d)]).sum();
            let r = back - x[(t, d)];
            recon += r * r;
        }
    }
    recon /= t_len as f64;

    let mut smooth = 0.0;
    if t_len > 1 {
        for t in 0..t_len - 1 {
            for l in 0..l_len {
                let d = u[(t + 1, l)] - u[(t, l)];
                smooth += d * d;
            }
        }
        smooth /= (t_len - 1) as f64;
    }
    Ok(TspcaLosses { pro, recon, smooth })
}

/// Gradient of `pro + lambda * recon + beta * smooth` with respect to `P`,
/// using the bank's own `lambda` and `beta`.
pub fn tspca_grads(bank: &ProjectorBank, v: &VideoFeatures) -> Result<Matrix> {
    check_dim(bank, v)?;
    let x = v.features();
    let p = &bank.projectors;
    let (t_len, l_len, d_len) = (x.rows(), p.rows(), p.cols());
    let tf = t_len as f64;
    let u = projections(bank, v);
    let means = column_means(&u);
    let mut grad = Matrix::zeros(l_len, d_len);

    // Variance: -(2/T) sum_t c_tl x_t (centering drops out since sum_t c_tl = 0).
    for t in 0..t_len {
        let xt = x.row(t);
        for l in 0..l_len {
            let c = -2.0 * (u[(t, l)] - means[l]) / tf;
            for (g, xv) in grad.row_mut(l).iter_mut().zip(xt) {
                *g += c * xv;
            }
        }
    }

    // Orthogonality: (4/L^2) (P P^T - I) P.
    let ortho = gram_residual(p).matmul(p)?;
    grad.add_scaled(&ortho, 4.0 / (l_len * l_len) as f64);

    // Reconstruction: (2/T) sum_t [u_t r_t^T + (P r_t) x_t^T], r_t = P^T u_t - x_t.
    if bank.lambda != 0.0 {
        let scale = 2.0 * bank.lambda / tf;
        let mut r = vec![0.0; d_len];
        for t in 0..t_len {
            let xt = x.row(t);
            for (d, rd) in r.iter_mut().enumerate() {
                *rd = (0..l_len).map(|l| u[(t, l)] * p[(l, d)]).sum::<f64>() - xt[d];
            }
            for l in 0..l_len {
                let ul = u[(t, l)];
                let pr = dot(p.row(l), &r);
                for ((g, rd), xv) in grad.row_mut(l).iter_mut().zip(&r).zip(xt) {
                    *g += scale * (ul * rd + pr * xv);
                }
            }
        }
    }

    // Smoothing: (2/(T-1)) sum_t (u_{t+1,l} - u_{t,l}) (x_{t+1} - x_t).
    if bank.beta != 0.0 && t_len > 1 {
        let scale = 2.0 * bank.beta / (t_len - 1) as f64;
        for t in 0..t_len - 1 {
            let (a, b) = (x.row(t), x.row(t + 1));
            for l in 0..l_len {
                let du = scale * (u[(t + 1, l)] - u[(t, l)]);
                for ((g, xa), xb) in grad.row_mut(l).iter_mut().zip(a).zip(b) {
                    *g += du * (xb - xa);
                }
            }
        }
    }
    Ok(grad)
}

/// Per-video SGD over a seeded shuffle. Only features are consumed; labels
/// and classifier state cannot reach this function.
pub fn train_tspca(videos: &[VideoFeatures], cfg: &TspcaConfig) -> Result<TrainedTspca> {
    cfg.validate()?;
    let dim = videos
        .first()
        .map(VideoFeatures::dim)
        .ok_or_else(|| Error::config("TS-PCA training set is empty"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bank = init_with(cfg.projectors, dim, &mut rng)?;
    bank.lambda = cfg.lambda;
    bank.beta = cfg.beta;
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let v = &videos[i];
            let loss = tspca_losses(&bank, v)?.total(bank.lambda, bank.beta);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite TS-PCA loss at epoch {epoch}, video {}",
                    v.video_id
                )));
            }
            total += loss;
            let g = tspca_grads(&bank, v)?;
            bank.projectors.add_scaled(&g, -cfg.learning_rate);
            if !bank.projectors.is_finite() {
                return Err(Error::Numerical(format!(
                    "TS-PCA projectors diverged at epoch {epoch}, video {}",
                    v.video_id
                )));
            }
        }
        history.push(total / videos.len() as f64);
    }

    let orthogonality_error = bank.orthogonality_error();
    Ok(TrainedTspca {
        bank,
        loss_history: history,
        orthogonality_error,
    })
}

/// Pooled covariance of per-video-centered features, `sum_v sum_t c c^T / sum_v T`.
pub fn pooled_centered_covariance(videos: &[VideoFeatures]) -> Result<Matrix> {
    let dim = videos
        .first()
        .map(VideoFeatures::dim)
        .ok_or_else(|| Error::config("no videos for covariance"))?;
    let mut cov = Matrix::zeros(dim, dim);
    let mut count = 0usize;
    for v in videos {
        if v.dim() != dim {
            return Err(Error::shape(format!("video {} has D={}, expected {dim}", v.video_id, v.dim())));
        }
        let x = v.features();
        let means = column_means(x);
        for t in 0..x.rows() {
            let c: Vec<f64> = x.row(t).iter().zip(&means).map(|(a, m)| a - m).collect();
            for i in 0..dim {
                for j in 0..dim {
                    cov[(i, j)] += c[i] * c[j];
                }
            }
        }
        count += x.rows();
    }
    cov.scale(1.0 / count as f64);
    Ok(cov)
}

/// Top-`L` eigenvectors (as rows, eigenvalues descending) of the pooled
/// per-video-centered covariance. This is the closed-form limit of TS-PCA with
/// `lambda = beta = 0`.
pub fn exact_pca_oracle(videos: &[VideoFeatures], num_projectors: usize) -> Result<Matrix> {
    let cov = pooled_centered_covariance(videos)?;
    let dim = cov.rows();
    if dim > ORACLE_MAX_DIM {
        return Err(Error::config(format!("D={dim} exceeds dense oracle limit {ORACLE_MAX_DIM}")));
    }
    if num_projectors == 0 || num_projectors > dim {
        return Err(Error::config(format!("need 1 <= L <= D, got L={num_projectors}, D={dim}")));
    }
    let eig = symmetric_eigen(&cov)?;
    Ok(Matrix::from_fn(num_projectors, dim, |l, d| eig.vectors[(d, l)]))
}

/// Largest principal angle (radians) between the row spaces of `a` and `b`,
/// which must have the same shape and full row rank.
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::shape("principal angles need equally shaped bases"));
    }
    let (mut qa, mut qb) = (a.clone(), b.clone());
    if !orthonormalize_rows(&mut qa) || !orthonormalize_rows(&mut qb) {
        return Err(Error::Numerical("basis is rank deficient".into()));
    }
    let m = qa.matmul(&qb.transpose())?;
    let mmt = m.matmul(&m.transpose())?;
    let eig = symmetric_eigen(&mmt)?;
    let smallest = eig.values.last().copied().unwrap_or(0.0).clamp(0.0, 1.0);
    Ok(libm::acos(libm::sqrt(smallest)))
}

/// Raw per-segment mean projection `z~_t = (1/L) sum_l p_l . x_t`.
pub fn raw_projection(bank: &ProjectorBank, v: &VideoFeatures) -> Result<Vec<f64>> {
    check_dim(bank, v)?;
    let u = projections(bank, v);
    let l_len = bank.num_projectors() as f64;
    Ok((0..u.rows()).map(|t| u.row(t).iter().sum::<f64>() / l_len).collect())
}

/// Zero-mean, unit population variance; the zero vector when `T = 1` or the
/// standard deviation is at most [`STD_FLOOR`].
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = libm::sqrt(var);
    if std <= STD_FLOOR {
        return vec![0.0; n];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

pub fn confounder_score(bank: &ProjectorBank, v: &VideoFeatures) -> Result<ConfounderScore> {
    let sign = f64::from(bank.orientation);
    let z = standardize(&raw_projection(bank, v)?)
        .into_iter()
        .map(|s| sign * s)
        .collect();
    Ok(ConfounderScore {
        video_id: v.video_id.clone(),
        z,
    })
}

/// Pearson correlation, pooled over every segment of every video, between the
/// raw projection and the per-segment max-class CAS. `None` when either
/// series has zero variance.
pub fn orientation_correlation(bank: &ProjectorBank, videos: &[VideoFeatures], cas: &[Cas]) -> Result<Option<f64>> {
    if videos.len() != cas.len() {
        return Err(Error::shape(format!("{} videos but {} CAS", videos.len(), cas.len())));
    }
    let mut zs = Vec::new();
    let mut ms = Vec::new();
    for (v, a) in videos.iter().zip(cas) {
        if a.num_segments() != v.num_segments() || a.video_id != v.video_id {
            return Err(Error::shape(format!("CAS {} does not match video {}", a.video_id, v.video_id)));
        }
        zs.extend(raw_projection(bank, v)?);
        ms.extend((0..a.num_segments()).map(|t| a.scores.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    }
    Ok(pearson(&zs, &ms))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= STD_FLOOR * STD_FLOOR * n || sbb <= STD_FLOOR * STD_FLOOR * n {
        return None;
    }
    Some(sab / libm::sqrt(saa * sbb))
}

/// Fixes the bank's sign so that the confounder score correlates positively
/// with the given CAS. Any WTAL model that can produce a CAS may be used.
pub fn orient_projectors_with_cas(bank: &ProjectorBank, videos: &[VideoFeatures], cas: &[Cas]) -> Result<ProjectorBank> {
    let orientation = match orientation_correlation(bank, videos, cas)? {
        Some(r) if r < 0.0 => -1,
        Some(_) => 1,
        None => {
            log::warn!("pooled projection or CAS series has zero variance; keeping orientation +1");
            1
        }
    };
    Ok(bank.clone().with_orientation(orientation))
}

/// [`orient_projectors_with_cas`] using the baseline classifier's CAS.
pub fn orient_projectors(bank: &ProjectorBank, videos: &[VideoFeatures], baseline: &ClassifierParams) -> Result<ProjectorBank> {
    let cas = videos
        .iter()
        .map(|v| cas_forward(baseline, v))
        .collect::<Result<Vec<_>>>()?;
    orient_projectors_with_cas(bank, videos, &cas)
}
