use thiserror::Error;

/// Errors produced by the fitting, sampling and evaluation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric failure in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error(
        "no sign change for shape root of coordinate {index}: g({lo:.6e}) = {g_lo:.6e}, g({hi:.6e}) = {g_hi:.6e}"
    )]
    RootBracket {
        index: usize,
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("lasso coordinate descent did not converge after {sweeps} sweeps")]
    LassoNotConverged { sweeps: usize },

    #[error(
        "optimizer diverged at step {step}: objective {objective:.6e} vs initial {initial:.6e}"
    )]
    Diverged {
        step: usize,
        objective: f64,
        initial: f64,
    },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// True when the root cause is a numerical failure rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric { .. }
            | Error::RootBracket { .. }
            | Error::LassoNotConverged { .. }
            | Error::Diverged { .. } => true,
            Error::AtIteration { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
