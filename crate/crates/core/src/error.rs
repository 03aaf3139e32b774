use std::fmt;

/// Broad classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or an impossible request.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// A numerical routine failed to produce a trustworthy answer.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("degenerate dataset: zero bandwidth")]
    ZeroBandwidth,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("eigensolver did not converge after {restarts} restarts (residual norms: {})", ResidualList(.residuals))]
    NoConvergence { restarts: usize, residuals: Vec<f64> },

    #[error("extension ill-posed: {0}")]
    IllPosedExtension(String),

    #[error("steady state not reached by t = {t_max} (last state {state:?}, |rhs| = {rhs_norm:e})")]
    SteadyStateNotReached { t_max: f64, state: [f64; 2], rhs_norm: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::DimensionMismatch(_)
            | Error::InvalidData(_)
            | Error::ZeroBandwidth
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::NoConvergence { .. }
            | Error::IllPosedExtension(_)
            | Error::SteadyStateNotReached { .. }
            | Error::Linalg(_) => ErrorClass::Numerical,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }
}

struct ResidualList<'a>(&'a [f64]);

impl fmt::Display for ResidualList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "[")?;
        for (i, r) in self.0.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{r:.3e}")?;
        }
        if self.0.len() > SHOWN {
            write!(f, ", ... ({} total)", self.0.len())?;
        }
        write!(f, "]")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
