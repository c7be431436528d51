use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WtalError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Feature file of a manifest entry could not be read.
    #[error("video {video_id}: {source}")]
    VideoIo {
        video_id: String,
        #[source]
        source: Box<WtalError>,
    },
    #[error("{}: bad {field}: {message}", path.display())]
    Format {
        path: PathBuf,
        field: &'static str,
        message: String,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("missing output of stage `{stage}`: {}", path.display())]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] wtal_core::Error),
}

impl WtalError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        WtalError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, field: &'static str, message: impl Into<String>) -> Self {
        WtalError::Format {
            path: path.to_path_buf(),
            field,
            message: message.into(),
        }
    }

    pub(crate) fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        WtalError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            WtalError::Io { .. } => 2,
            WtalError::VideoIo { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, WtalError>;
