use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("solver did not converge after {iterations} sweeps (kkt residual {kkt_residual:.3e})")]
    NonConvergence { iterations: usize, kkt_residual: f64 },

    #[error("system matrix is ill-conditioned (1-norm condition estimate {condition:.3e} exceeds {limit:.1e})")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("covariate matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficientCovariates { rank: usize, cols: usize },

    #[error("instrument rank condition fails: smallest singular value {smallest:.3e}")]
    InstrumentRank { smallest: f64 },

    #[error("division guard: {0}")]
    ZeroDivision(String),

    #[error("degrees of freedom must be positive (n = {n}, selected = {selected}, k = {k})")]
    DegreesOfFreedom { n: usize, selected: usize, k: usize },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
