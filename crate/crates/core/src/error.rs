use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration did not converge ({context}): last estimate {estimate:e}, error estimate {error:e}")]
    Integration {
        context: String,
        estimate: f64,
        error: f64,
    },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("root is not bracketed on [{lo}, {hi}]: g(lo) = {g_lo:e}, g(hi) = {g_hi:e}")]
    Unbracketed {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("ill-conditioned system: {message} (det = {det:e}, min pivot ratio = {pivot_ratio:e})")]
    Conditioning {
        message: String,
        det: f64,
        pivot_ratio: f64,
    },

    #[error("insufficient sample: {size} observations cannot determine {required} moments")]
    InsufficientSample { size: usize, required: usize },

    #[error("unsupported moment: {0}")]
    UnsupportedMoment(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("infeasible correlation {rho_x} for pair ({i}, {j}); attainable range is [{lower}, {upper}]")]
    InfeasibleCorrelation {
        i: usize,
        j: usize,
        rho_x: f64,
        lower: f64,
        upper: f64,
    },

    #[error("degenerate marginal: {0}")]
    DegenerateMarginal(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("invalid value for `{key}`: {message}")]
    Schema { key: String, message: String },
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleCorrelation { .. } => 2,
            Error::Conditioning { .. } | Error::Singular(_) | Error::NotPositiveDefinite(_) => 3,
            Error::Io(_) | Error::Schema { .. } => 4,
            _ => 1,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn schema(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
