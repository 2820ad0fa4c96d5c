use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    Range(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error(
        "quadrature did not reach tolerance {tol:e} (estimated error {estimate:e}, {intervals} intervals)"
    )]
    Quadrature {
        tol: f64,
        estimate: f64,
        intervals: usize,
    },

    #[error("inner solve failed at time step {step}: residual {residual:e} after {iterations} iterations")]
    Convergence {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("cylinder leaves the field domain: {0}")]
    Domain(String),

    #[error("no root bracket at level {level}: A*(right end) = {value:e} > kappa = {kappa}")]
    RootBracket { level: usize, value: f64, kappa: f64 },

    #[error("field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short category name, e.g. `RangeError`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Range(_) => "RangeError",
            Error::Grid(_) => "GridError",
            Error::Quadrature { .. } => "QuadratureError",
            Error::Convergence { .. } => "ConvergenceError",
            Error::Domain(_) => "DomainError",
            Error::RootBracket { .. } => "RootBracketError",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }

    /// Errors caused by invalid inputs rather than by a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Range(_) | Error::Grid(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn range_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Range(msg.into()))
}
