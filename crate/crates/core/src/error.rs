use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum SmrError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerics error: {0}")]
    Numerics(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("config error: {0}")]
    Config(String),
}

impl SmrError {
    /// Stable, machine-parsable category name.
    pub fn category(&self) -> &'static str {
        match self {
            SmrError::Io(_) => "IoError",
            SmrError::Format(_) => "FormatError",
            SmrError::Range(_) => "RangeError",
            SmrError::Shape(_) => "ShapeError",
            SmrError::Data(_) => "DataError",
            SmrError::Numerics(_) => "NumericsError",
            SmrError::Coverage(_) => "CoverageError",
            SmrError::Spec(_) => "SpecError",
            SmrError::Config(_) => "ConfigError",
        }
    }
}

impl From<serde_json::Error> for SmrError {
    fn from(e: serde_json::Error) -> Self {
        SmrError::Format(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, SmrError>;
