use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("fixed point is not stable: max real part of the spectrum is {max_real}")]
    Unstable { max_real: f64 },
    #[error("state is not a fixed point: residual {residual:e}")]
    NotFixedPoint { residual: f64 },
    #[error("invalid mode: {0}")]
    InvalidMode(String),
    #[error("repeated eigenvalue: pairwise gap {gap:e} below tolerance")]
    RepeatedEigenvalue { gap: f64 },
    #[error("degenerate Floquet structure at q = {q:?}: {reason}")]
    Degenerate { q: Vec<f64>, reason: String },
    #[error("family boundary reached at q = {q:?}: {reason}")]
    FamilyBoundary { q: Vec<f64>, reason: String },
    #[error("period retune needed at q = {q:?}")]
    RetuneNeeded { q: Vec<f64> },
    #[error("singular phase-amplitude solve at theta = {theta}, q = {q:?}")]
    Singular { theta: f64, q: Vec<f64> },
    #[error("q = {q:?} is outside the family range")]
    OutOfRange { q: Vec<f64> },
    #[error("state lies {distance:e} from the family, above the threshold {threshold:e}")]
    OutOfNeighborhood { distance: f64, threshold: f64 },
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: &'static str },
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(&'static str),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
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
