use thiserror::Error;

/// Errors raised by the optimal control toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid decision data: {0}")]
    Decision(String),
    #[error("time {t} outside horizon [{t0}, {tf}]")]
    OutOfRange { t: f64, t0: f64, tf: f64 },
    #[error("non-positive interval width {0}")]
    NonPositiveWidth(f64),
    #[error("quadrature order {0} outside 1..=64")]
    QuadratureOrder(usize),
    #[error("non-finite value while evaluating {0}")]
    NonFinite(&'static str),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("failed to load parameter file {path}: {reason}")]
    ParameterFile { path: String, reason: String },
    #[error("invalid parameters: {0}")]
    Parameters(String),
    #[error("unknown representation mode {0:?}")]
    UnknownMode(String),
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
