use thiserror::Error;

use crate::lp::LpError;
use crate::measures::OrderReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("call curve admits no probability measure: {0}")]
    InfeasibleCurve(String),

    #[error("bad density spec: {0}")]
    BadSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {0:?} is not on the tabulation grid")]
    OffGrid(Vec<f64>),

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("marginals are not in convex order: {}", .0.summary())]
    NotAdmissible(Box<OrderReport>),

    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),

    #[error("marginals were admissible but the discretized problem is infeasible; re-discretize with a finer or nested grid")]
    DiscretizationInfeasible,

    #[error("dual solution fails the hedge check (violation {violation:.3e})")]
    DegenerateDual { violation: f64 },

    #[error("atom {0} lies outside the hull of the evaluation grid")]
    GridCoverage(f64),

    #[error("{0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Whether the error comes from the problem data rather than from I/O or formats.
    pub fn is_domain(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
