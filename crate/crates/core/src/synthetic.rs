//! Synthetic confounded-video generator.
//!
//! Each video carries a latent context (the confounder) that is drawn
//! conditionally on the video's class and shifts *every* segment, foreground
//! and background alike, along a context direction. A classifier trained from
//! video-level labels can therefore pick up context as a shortcut.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, GroundTruthInstance, Split, VideoFeatures, VideoLabel};
use crate::error::{Error, Result};
use crate::matrix::{orthonormalize_rows, Matrix};

/// Segment stride used for every generated video.
pub const SYNTHETIC_SECONDS_PER_SEGMENT: f64 = 1.0;

/// Probability that a video's context equals `class mod num_contexts`.
pub const CONTEXT_CLASS_COUPLING: f64 = 0.8;

/// Probability that the second foreground interval of a video has a class
/// different from the first.
const SECOND_CLASS_SWITCH: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub segments: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub num_contexts: usize,
    pub context_strength: f64,
    pub noise_sigma: f64,
    pub fg_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_train: 20,
            n_test: 20,
            segments: 50,
            dim: 16,
            num_classes: 4,
            num_contexts: 3,
            context_strength: 1.5,
            noise_sigma: 0.5,
            fg_fraction: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_train == 0 || self.n_test == 0 {
            bad.push("n_train and n_test must be positive");
        }
        if self.segments < 8 {
            bad.push("segments must be >= 8");
        }
        if self.dim < 8 {
            bad.push("dim must be >= 8");
        }
        if self.num_classes < 2 {
            bad.push("num_classes must be >= 2");
        }
        if self.num_contexts < 2 {
            bad.push("num_contexts must be >= 2");
        }
        if !(self.context_strength >= 0.0 && self.context_strength.is_finite()) {
            bad.push("context_strength must be non-negative");
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            bad.push("noise_sigma must be positive");
        }
        if !(self.fg_fraction > 0.0 && self.fg_fraction <= 0.6) {
            bad.push("fg_fraction must lie in (0, 0.6]");
        }
        if !bad.is_empty() {
            return Err(Error::config(bad.join("; ")));
        }
        let needed = self.num_classes + self.num_contexts + 1;
        if self.dim < needed {
            return Err(Error::config(format!(
                "dim {} too small: {} classes + {} contexts + 1 background need {needed} orthogonal directions",
                self.dim, self.num_classes, self.num_contexts
            )));
        }
        Ok(())
    }
}

/// Generated datasets plus the latent variables behind them.
#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub train: Dataset,
    pub test: Dataset,
    /// Context index of every train video, in dataset order.
    pub train_contexts: Vec<usize>,
    pub test_contexts: Vec<usize>,
    /// Rows: class prototypes, then context directions, then background.
    pub directions: Matrix,
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, Dataset)> {
    let b = generate_synthetic_with_latents(cfg)?;
    Ok((b.train, b.test))
}

pub fn generate_synthetic_with_latents(cfg: &SyntheticConfig) -> Result<SyntheticBenchmark> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_dirs = cfg.num_classes + cfg.num_contexts + 1;
    let directions = loop {
        let mut m = Matrix::from_fn(n_dirs, cfg.dim, |_, _| rng.sample(StandardNormal));
        if orthonormalize_rows(&mut m) {
            break m;
        }
    };

    let (train, train_contexts) = generate_split(cfg, &directions, Split::Train, cfg.n_train, &mut rng)?;
    let (test, test_contexts) = generate_split(cfg, &directions, Split::Test, cfg.n_test, &mut rng)?;
    Ok(SyntheticBenchmark {
        train,
        test,
        train_contexts,
        test_contexts,
        directions,
    })
}

fn generate_split(
    cfg: &SyntheticConfig,
    directions: &Matrix,
    split: Split,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, Vec<usize>)> {
    let t_len = cfg.segments;
    let sps = SYNTHETIC_SECONDS_PER_SEGMENT;
    let background = directions.row(cfg.num_classes + cfg.num_contexts);
    let mut videos = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut gts = Vec::new();
    let mut contexts = Vec::with_capacity(count);

    for i in 0..count {
        let video_id = format!("{}_{i:04}", split.as_str());
        let class = rng.random_range(0..cfg.num_classes);
        let context = if rng.random_bool(CONTEXT_CLASS_COUPLING) {
            class % cfg.num_contexts
        } else {
            rng.random_range(0..cfg.num_contexts)
        };
        let context_dir = directions.row(cfg.num_classes + context);

        let intervals = sample_intervals(cfg, class, rng);
        let mut seg_class: Vec<Option<usize>> = alloc::vec![None; t_len];
        for &(s, e, c) in &intervals {
            for slot in &mut seg_class[s..=e] {
                *slot = Some(c);
            }
        }

        let mut x = Matrix::zeros(t_len, cfg.dim);
        for (t, sc) in seg_class.iter().enumerate() {
            let base = match sc {
                Some(c) => directions.row(*c),
                None => background,
            };
            for (d, out) in x.row_mut(t).iter_mut().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                let v = base[d] + cfg.context_strength * context_dir[d] + cfg.noise_sigma * noise;
                // Quantize to what the on-disk format stores.
                *out = v as f32 as f64;
            }
        }

        let mut present: Vec<usize> = intervals.iter().map(|iv| iv.2).collect();
        present.sort_unstable();
        present.dedup();
        labels.push(VideoLabel::from_classes(video_id.clone(), cfg.num_classes, &present));
        for &(s, e, c) in &intervals {
            gts.push(GroundTruthInstance {
                video_id: video_id.clone(),
                class_index: c,
                start_sec: s as f64 * sps,
                end_sec: (e + 1) as f64 * sps,
            });
        }
        videos.push(VideoFeatures::new(video_id, x, sps)?);
        contexts.push(context);
    }

    Ok((Dataset::new(videos, labels, gts, split, cfg.num_classes)?, contexts))
}

/// One or two disjoint, non-adjacent foreground intervals `(start, end, class)`
/// with inclusive segment bounds, covering about `fg_fraction * T` segments.
fn sample_intervals(cfg: &SyntheticConfig, class: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, usize)> {
    let t_len = cfg.segments;
    let two = rng.random_bool(0.5);
    let n_int = if two { 2 } else { 1 };
    let fg_total = libm::round(cfg.fg_fraction * t_len as f64) as usize;
    let fg_total = fg_total.clamp(n_int, t_len - n_int);
    let bg_total = t_len - fg_total;

    if !two {
        let start = rng.random_range(0..=bg_total);
        return alloc::vec![(start, start + fg_total - 1, class)];
    }

    let second_class = if rng.random_bool(SECOND_CLASS_SWITCH) {
        let other = rng.random_range(0..cfg.num_classes - 1);
        if other >= class {
            other + 1
        } else {
            other
        }
    } else {
        class
    };
    let len1 = fg_total / 2;
    let len2 = fg_total - len1;
    let gap_mid = 1 + rng.random_range(0..bg_total);
    let gap_pre = rng.random_range(0..=bg_total - gap_mid);
    let s1 = gap_pre;
    let e1 = s1 + len1 - 1;
    let s2 = e1 + 1 + gap_mid;
    let e2 = s2 + len2 - 1;
    alloc::vec![(s1, e1, class), (s2, e2, second_class)]
}
