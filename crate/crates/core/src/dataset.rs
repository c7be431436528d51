//! In-memory dataset types: per-video segment features, weak video-level
//! labels and (evaluation-only) ground-truth intervals.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Observed features of one video: `T` segments of `D`-dimensional features.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    x: Matrix,
    seconds_per_segment: f64,
}

impl VideoFeatures {
    pub fn new(video_id: impl Into<String>, x: Matrix, seconds_per_segment: f64) -> Result<Self> {
        let video_id = video_id.into();
        let mut problems = Vec::new();
        if x.rows() == 0 {
            problems.push(format!("video {video_id}: T must be >= 1"));
        }
        if x.cols() == 0 {
            problems.push(format!("video {video_id}: D must be >= 1"));
        }
        if !(seconds_per_segment > 0.0 && seconds_per_segment.is_finite()) {
            problems.push(format!(
                "video {video_id}: seconds_per_segment must be positive, got {seconds_per_segment}"
            ));
        }
        if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
            let (t, d) = (pos / x.cols().max(1), pos % x.cols().max(1));
            problems.push(format!("video {video_id}: non-finite feature at t={t}, d={d}"));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            video_id,
            x,
            seconds_per_segment,
        })
    }

    /// Segment count `T`.
    pub fn num_segments(&self) -> usize {
        self.x.rows()
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.x
    }

    pub fn seconds_per_segment(&self) -> f64 {
        self.seconds_per_segment
    }

    pub fn duration(&self) -> f64 {
        self.num_segments() as f64 * self.seconds_per_segment
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoLabel {
    pub video_id: String,
    /// Multi-hot class presence vector of length `F`.
    pub y: Vec<u8>,
}

impl VideoLabel {
    pub fn from_classes(video_id: impl Into<String>, num_classes: usize, classes: &[usize]) -> Self {
        let mut y = alloc::vec![0u8; num_classes];
        for &c in classes {
            if c < num_classes {
                y[c] = 1;
            }
        }
        Self {
            video_id: video_id.into(),
            y,
        }
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.y
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| i)
    }

    pub fn has(&self, class: usize) -> bool {
        self.y.get(class) == Some(&1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub video_id: String,
    pub class_index: usize,
    pub start_sec: f64,
    pub end_sec: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub videos: Vec<VideoFeatures>,
    pub labels: Vec<VideoLabel>,
    pub ground_truth: Vec<GroundTruthInstance>,
    pub split: Split,
    pub num_classes: usize,
}

impl Dataset {
    /// Builds a dataset and checks every cross-record invariant, reporting all
    /// violations at once.
    pub fn new(
        videos: Vec<VideoFeatures>,
        labels: Vec<VideoLabel>,
        ground_truth: Vec<GroundTruthInstance>,
        split: Split,
        num_classes: usize,
    ) -> Result<Self> {
        let ds = Self {
            videos,
            labels,
            ground_truth,
            split,
            num_classes,
        };
        let problems = ds.violations();
        if problems.is_empty() {
            Ok(ds)
        } else {
            Err(Error::Validation(problems))
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.num_classes == 0 {
            problems.push(String::from("number of classes must be >= 1"));
        }
        let mut index: BTreeMap<&str, &VideoFeatures> = BTreeMap::new();
        for v in &self.videos {
            if index.insert(v.video_id.as_str(), v).is_some() {
                problems.push(format!("duplicate video id {}", v.video_id));
            }
        }
        if let Some(first) = self.videos.first() {
            for v in &self.videos {
                if v.dim() != first.dim() {
                    problems.push(format!(
                        "video {} has feature dimension {}, expected {}",
                        v.video_id,
                        v.dim(),
                        first.dim()
                    ));
                }
            }
        }
        let mut labelled: BTreeMap<&str, &VideoLabel> = BTreeMap::new();
        for l in &self.labels {
            if !index.contains_key(l.video_id.as_str()) {
                problems.push(format!("labels reference unknown video {}", l.video_id));
            }
            if l.y.len() != self.num_classes {
                problems.push(format!(
                    "labels for {} have {} entries, expected {} classes",
                    l.video_id,
                    l.y.len(),
                    self.num_classes
                ));
            }
            if l.y.iter().any(|&b| b > 1) {
                problems.push(format!("labels for {} are not multi-hot", l.video_id));
            }
            if self.split == Split::Train && l.y.iter().all(|&b| b == 0) {
                problems.push(format!("training video {} has no positive label", l.video_id));
            }
            if labelled.insert(l.video_id.as_str(), l).is_some() {
                problems.push(format!("duplicate labels for video {}", l.video_id));
            }
        }
        if self.split == Split::Train {
            for v in &self.videos {
                if !labelled.contains_key(v.video_id.as_str()) {
                    problems.push(format!("training video {} has no labels", v.video_id));
                }
            }
        }
        for g in &self.ground_truth {
            let Some(v) = index.get(g.video_id.as_str()) else {
                problems.push(format!("ground truth references unknown video {}", g.video_id));
                continue;
            };
            if g.class_index >= self.num_classes {
                problems.push(format!(
                    "ground truth in {} has class {} outside [0, {})",
                    g.video_id, g.class_index, self.num_classes
                ));
            }
            if !(g.start_sec >= 0.0 && g.start_sec < g.end_sec && g.end_sec <= v.duration()) {
                problems.push(format!(
                    "ground truth in {} spans [{}, {}] outside video duration {}",
                    g.video_id,
                    g.start_sec,
                    g.end_sec,
                    v.duration()
                ));
            }
            match labelled.get(g.video_id.as_str()) {
                Some(l) if l.has(g.class_index) => {}
                _ => problems.push(format!(
                    "ground truth class {} in {} is not in the video's labels",
                    g.class_index, g.video_id
                )),
            }
        }
        problems
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    /// Feature dimension shared by all videos, if any.
    pub fn feature_dim(&self) -> Option<usize> {
        self.videos.first().map(VideoFeatures::dim)
    }

    pub fn video(&self, id: &str) -> Option<&VideoFeatures> {
        self.videos.iter().find(|v| v.video_id == id)
    }

    pub fn label(&self, id: &str) -> Option<&VideoLabel> {
        self.labels.iter().find(|l| l.video_id == id)
    }

    /// Sub-dataset restricted to the videos at `indices`, keeping their labels
    /// and ground truth. Order follows `indices`.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let videos: Vec<VideoFeatures> = indices.iter().map(|&i| self.videos[i].clone()).collect();
        let keep: BTreeSet<&str> = videos.iter().map(|v| v.video_id.as_str()).collect();
        let labels = videos
            .iter()
            .filter_map(|v| self.label(&v.video_id).cloned())
            .collect();
        let ground_truth = self
            .ground_truth
            .iter()
            .filter(|g| keep.contains(g.video_id.as_str()))
            .cloned()
            .collect();
        Dataset {
            videos,
            labels,
            ground_truth,
            split: self.split,
            num_classes: self.num_classes,
        }
    }
}
