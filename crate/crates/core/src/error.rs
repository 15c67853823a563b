use std::io;
use std::path::PathBuf;

/// Errors produced by the RCV toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed npy file: {0}")]
    MalformedNpy(String),

    #[error("unsupported dtype {0:?} (expected '<f4' or '<f8')")]
    UnsupportedDtype(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("shape {shape:?} does not match {len} data elements")]
    ShapeMismatch { shape: Vec<usize>, len: usize },

    #[error("measures file: {0}")]
    Measures(String),

    #[error("duplicate measure for sample '{sample_id}', concept '{concept}'")]
    DuplicateMeasure { sample_id: String, concept: String },

    #[error("sample misalignment: {0}")]
    Misaligned(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("layer mismatch: expected '{expected}', found '{found}'")]
    LayerMismatch { expected: String, found: String },

    #[error("unknown layer '{0}'")]
    UnknownLayer(String),

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty mask or region")]
    EmptyRegion,

    #[error("no valid pixel pair inside the mask for offset ({dy}, {dx})")]
    NoPixelPairs { dy: isize, dx: isize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("image decoding: {0}")]
    Image(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Tags errors of a pipeline stage with its name.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
