//! Error type unifying IO, format and pipeline failures.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: color image; pass --luma to convert to luminance")]
    ColorWithoutLumaFlag { path: PathBuf },

    #[error("missing dataset files; expected:\n{}", expected.iter().map(|p| format!("  {}", p.display())).collect::<Vec<_>>().join("\n"))]
    MissingDataset { expected: Vec<PathBuf> },

    #[error("{0}")]
    Image(#[from] denoise_core::image::ImageError),

    #[error("{0}")]
    Pipeline(#[from] denoise_core::multiframe::PipelineError),

    #[error("{0}")]
    Flow(#[from] denoise_core::flow::FlowError),

    #[error("{0}")]
    Filter(#[from] denoise_core::FilterError),

    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }
}
