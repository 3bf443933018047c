use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] t3s_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: byte {offset}: {msg}", file.display())]
    Format {
        file: PathBuf,
        offset: usize,
        msg: String,
    },
    #[error("{}: line {line}: {msg}", file.display())]
    Manifest {
        file: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

impl From<t3s_core::tensor::TensorError> for Error {
    fn from(e: t3s_core::tensor::TensorError) -> Self {
        Error::Core(e.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
