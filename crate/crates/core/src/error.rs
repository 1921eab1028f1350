use std::io;
use std::path::PathBuf;

use frontalize_tensor::TensorError;

/// Errors raised anywhere in the pipeline. Display strings carry the module
/// that failed so the command line can report them verbatim.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("manifest: line {line}, field `{field}`: {message}")]
    Manifest {
        line: usize,
        field: String,
        message: String,
    },
    #[error(
        "manifest: line {line}: pose (yaw {yaw}, pitch {pitch}) is not in the M2FPA pose taxonomy"
    )]
    Taxonomy { line: usize, yaw: f64, pitch: f64 },
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("parsing: {0}")]
    Parsing(String),
    #[error("losses: {0}")]
    Loss(String),
    #[error("networks: {0}")]
    Network(String),
    #[error("trainer: non-finite {name} at step {step}")]
    NonFinite { name: String, step: u64 },
    #[error("trainer: {0}")]
    Trainer(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("evaluator: gallery has no entry for subject(s) {}", join_ids(.0))]
    MissingGallery(Vec<u32>),
    #[error("evaluator: {0}")]
    Eval(String),
    #[error("fixtures: {0}")]
    Fixture(String),
    #[error("verify: {0}")]
    Verify(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("image: {}: {message}", .path.display())]
    Image { path: PathBuf, message: String },
    #[error("tensor: {0}")]
    Tensor(#[from] TensorError),
}

fn join_ids(ids: &[u32]) -> String {
    ids.iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Manifest { .. }
                | Error::Taxonomy { .. }
                | Error::Alignment(_)
                | Error::Protocol(_)
                | Error::Parsing(_)
                | Error::MissingGallery(_)
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
