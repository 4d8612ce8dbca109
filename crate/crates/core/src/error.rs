use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate polygon: {0} vertices (need at least 3)")]
    DegeneratePolygon(usize),

    #[error("polygon vertex ({x}, {y}) outside the {width}x{height} image")]
    VertexOutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("RLE runs sum to {got}, expected {expected}")]
    RleLength { expected: u64, got: u64 },

    #[error("empty mask")]
    EmptyMask,

    #[error("mask dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("degenerate box")]
    DegenerateBox,

    #[error("{kind} token index {index} out of range")]
    TokenOutOfRange { kind: &'static str, index: u32 },

    #[error("empty crop: mask has no set pixels inside the box")]
    EmptyCrop,

    #[error("cannot render an empty instance list")]
    EmptyInstances,

    #[error("invalid label {0:?}")]
    InvalidLabel(String),

    #[error("need at least {need} images to split, got {got}")]
    TooFewImages { need: usize, got: usize },

    #[error("empty pathology vocabulary")]
    EmptyVocabulary,

    #[error("dataset size for task {0} is zero")]
    ZeroSize(String),

    #[error("epoch of {batches} batches cannot cover {tasks} tasks")]
    ScheduleTooShort { batches: usize, tasks: usize },

    #[error("batch size must be at least 1")]
    ZeroBatchSize,

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("probability {0} outside (0, 1]")]
    InvalidProbability(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown {kind} {value:?}")]
    Unknown { kind: &'static str, value: String },

    #[error("manifest has {} violation(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidManifest(Vec<crate::model::Violation>),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

/// Attach a pipeline stage name to an error.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
