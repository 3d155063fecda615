use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read audio file {path}: {reason}")]
    UnreadableAudio { path: PathBuf, reason: String },

    #[error("unsupported audio encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },

    #[error("audio file {0} contains no samples")]
    EmptyAudio(PathBuf),

    #[error("invalid audio clip: {0}")]
    InvalidClip(String),

    #[error("{0} requires stereo input")]
    RequiresStereo(&'static str),

    #[error("clip of {samples} samples is shorter than one frame of {frame} samples")]
    ClipTooShort { samples: usize, frame: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("unknown feature block `{0}`")]
    UnknownBlock(String),

    #[error("{path}:{line}: {message}")]
    Annotation {
        path: String,
        line: usize,
        message: String,
    },

    #[error("label `{0}` is not in the class vocabulary")]
    UnknownLabel(String),

    #[error("need at least {need} recordings, got {have}")]
    TooFewRecordings { have: usize, need: usize },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("malformed container: {0}")]
    Container(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
