use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up. `detail` names the offending dimension.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid degradation spec `{spec}`: {reason}")]
    DegradeSpec { spec: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed or inconsistent on-disk data.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Training produced a non-finite loss.
    #[error("numerical divergence in {stage} at iteration {iteration}: {detail}")]
    Divergence {
        stage: String,
        iteration: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end:
    /// 1 usage, 2 data, 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::DegradeSpec { .. } | Error::Config(_) => 1,
            Error::Shape { .. } | Error::Data(_) | Error::Io { .. } => 2,
            Error::Divergence { .. } => 3,
        }
    }
}
