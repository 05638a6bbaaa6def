use thiserror::Error;

/// Errors raised by the analysis routines.
///
/// The variants fall into three families that the command-line front end maps
/// to distinct exit codes: malformed input, numerical failure, and a
/// precondition of the rank-one framework that does not hold.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("point {point:?} lies outside the covered window [{lo}, {hi}]")]
    Range { point: Vec<f64>, lo: f64, hi: f64 },

    #[error("numerical error at xi = {xi:?}: {msg}")]
    Numerical { xi: Vec<f64>, msg: String },

    #[error("kernel dimension is {dim}, expected 1")]
    Multiplicity { dim: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("no phase-matching root: {0}")]
    NotMatchable(String),

    #[error("unresolved grid: {points_per_wavelength:.2} points per wavelength (need at least 8)")]
    Resolution { points_per_wavelength: f64 },

    #[error("interaction product has rank {rank}, only rank one is supported")]
    UnsupportedRank { rank: usize },

    #[error("step size {dt:e} too large, use at most {suggested:e}")]
    StepSize { dt: f64, suggested: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn numerical(xi: &[f64], msg: impl Into<String>) -> Self {
        Error::Numerical { xi: xi.to_vec(), msg: msg.into() }
    }

    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_input(&self) -> bool {
        matches!(self, Error::Input(_) | Error::Dimension { .. } | Error::Range { .. } | Error::Io(_) | Error::NotApplicable(_) | Error::Resolution { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
