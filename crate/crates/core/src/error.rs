use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("detection references page {page} but the document has {pages} pages")]
    InvalidPage { page: usize, pages: usize },

    #[error("degenerate box after normalization on page {page}: {bbox:?}")]
    DegenerateBox { page: usize, bbox: [f64; 4] },

    #[error("no token falls inside the box {0:?}")]
    EmptyRoi([f64; 4]),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("no token grid for page {0}")]
    MissingGrid(usize),

    #[error("{parent} is not a parent candidate of block {child}")]
    NotACandidate { child: usize, parent: String },

    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("block id mismatch: {0}")]
    IdMismatch(String),

    #[error("duplicate chunk id {0}")]
    DuplicateChunkId(String),

    #[error("index has no dense vectors")]
    NoDenseVectors,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("malformed input at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPage { .. } => "InvalidPage",
            Error::DegenerateBox { .. } => "DegenerateBox",
            Error::EmptyRoi(_) => "EmptyROI",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::MissingGrid(_) => "MissingGrid",
            Error::NotACandidate { .. } => "NotACandidate",
            Error::Diverged { .. } => "Diverged",
            Error::IdMismatch(_) => "IdMismatch",
            Error::DuplicateChunkId(_) => "DuplicateChunkId",
            Error::NoDenseVectors => "NoDenseVectors",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::Parse { .. } => "ParseError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}
