use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("detector capability: {0}")]
    Capability(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("dataset {root}: {corrupt} of {total} files unreadable")]
    CorruptDataset {
        root: PathBuf,
        corrupt: usize,
        total: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Error::Format {
            what,
            path: path.into(),
            detail: detail.to_string(),
        }
    }

    /// Short category label used in CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) | Error::Shape(_) => "usage",
            Error::InvalidSpec(_) | Error::Config(_) => "config",
            Error::NumericDegeneracy(_) | Error::Divergence { .. } => "numeric",
            Error::Capability(_) => "detector",
            Error::UndefinedMetric(_) => "metric",
            Error::ArtifactMismatch(_) | Error::Format { .. } => "artifact",
            Error::CorruptDataset { .. } | Error::Io { .. } | Error::Image { .. } => "io",
        }
    }

    /// Process exit code for the CLI. 2 is reserved for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "config" => 3,
            "io" => 4,
            "artifact" => 5,
            "numeric" => 6,
            _ => 1,
        }
    }
}
