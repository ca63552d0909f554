use std::path::Path;

/// Failures of the command-line layer, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] ensparse_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            context: path.display().to_string(),
            source,
        }
    }

    /// 2 config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use ensparse_core::Error as C;
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Core(e) if e.kkt_residual().is_some() => 4,
            Error::Core(C::InvalidArgument(_)) => 2,
            Error::Core(C::EmptyGraph | C::ZeroColumn(_)) => 4,
            Error::Core(_) => 3,
        }
    }
}
