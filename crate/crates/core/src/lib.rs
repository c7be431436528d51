//! Weakly-supervised temporal action localization over precomputed segment
//! features, with a temporal-smoothing PCA (TS-PCA) deconfounder that
//! calibrates class activation sequences.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, manifests and
//! the command-line driver live in the `wtal` companion crate.
//!
//! Pipeline overview:
//!
//! 1. [`baseline`] trains a linear segment classifier from video-level labels
//!    (top-k mean pooling, softmax, per-class cross-entropy).
//! 2. [`tspca`] learns projectors from features alone and turns each video
//!    into a per-segment substitute-confounder score.
//! 3. [`deconfound`] adds `gamma * z` to every class column of the CAS.
//! 4. [`localize`] thresholds the (calibrated) CAS into scored instances.
//! 5. [`eval`] scores instances with tIoU-based mAP and an error taxonomy.

#![no_std]

extern crate alloc;

pub mod baseline;
pub mod dataset;
pub mod deconfound;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod localize;
pub mod matrix;
pub mod synthetic;
pub mod tspca;

pub use baseline::{
    cas_forward, topk_aggregate, train_classifier, video_cls_loss, Cas, ClassifierParams,
    TrainConfig, TrainedClassifier,
};
pub use dataset::{Dataset, GroundTruthInstance, Split, VideoFeatures, VideoLabel};
pub use deconfound::{calibrate, run_pipeline, CalibrationConfig, PipelineConfig, PipelineResult};
pub use error::{Error, Result};
pub use eval::{average_precision, error_profile, map_eval, tiou, ErrorProfile, EvalResult};
pub use localize::{extract_instances, nms, ActionInstance, LocalizeConfig};
pub use matrix::Matrix;
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use tspca::{
    confounder_score, exact_pca_oracle, init_projectors, orient_projectors, train_tspca,
    tspca_grads, tspca_losses, ConfounderScore, ProjectorBank, TspcaConfig, TspcaLosses,
};
