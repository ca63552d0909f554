use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lasso did not converge after {iterations} iterations (KKT residual {kkt:e})")]
    NotConverged { iterations: usize, kkt: f64 },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("column {0} has zero norm and cannot be normalized")]
    ZeroColumn(usize),

    #[error("need at least {needed} usable samples, found {available}")]
    NotEnoughSamples { needed: usize, available: usize },

    #[error("similarity graph has no edges")]
    EmptyGraph,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::Sample {
            index,
            source: Box::new(self),
        }
    }

    /// Final KKT residual when this error (or the error it wraps) is a solver failure.
    pub fn kkt_residual(&self) -> Option<f64> {
        match self {
            Error::NotConverged { kkt, .. } => Some(*kkt),
            Error::Sample { source, .. } => source.kkt_residual(),
            _ => None,
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
