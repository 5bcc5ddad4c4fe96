use std::path::PathBuf;

/// Errors produced by the phenotyping pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// A sheet or label file violated its schema.
    #[error("schema error at row {row}, column `{column}`: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate target `{0}`: fewer than two classes present")]
    DegenerateTarget(String),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("too many leaves: {0} surviving masks exceed the 255 grayscale ids")]
    TooManyLeaves(usize),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("model error: {0}")]
    Model(String),

    /// A pipeline stage failed; partial artifacts of earlier stages are kept.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for data/schema problems, 3 for
    /// stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { .. } => 3,
            _ => 2,
        }
    }
}
