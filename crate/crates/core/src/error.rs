use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("scene: {0}")]
    Scene(String),
    #[error("pose ({x:.3}, {y:.3}) lies inside a wall")]
    PoseInWall { x: f64, y: f64 },
    #[error("episode has ended; call reset before stepping")]
    EpisodeEnded,
    #[error("task: {0}")]
    Task(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("forward model has no stored frames")]
    EmptyFrameStore,
    #[error("prediction requested after frame {0} was already inserted")]
    PredictAfterInsert(u64),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("non-finite loss at update {update}; batch dumped to {}", path.display())]
    NonFiniteLoss { update: u64, path: PathBuf },
    #[error("output: {0}")]
    Output(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Grad(#[from] rbc_grad::GradError),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Checkpoint container failures, one variant per way a file can be bad.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint is truncated (needed {needed} bytes at offset {offset})")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic {0:?}; not an RBC1 checkpoint")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("tensor {name}: checkpoint shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor {0} missing from checkpoint")]
    MissingTensor(String),
    #[error("checkpoint config hash {found} differs from run config {expected}")]
    ConfigMismatch { expected: String, found: String },
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CoreError {
    let path = path.into();
    move |source| CoreError::Io { path, source }
}
