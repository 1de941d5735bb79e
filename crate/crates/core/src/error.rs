use thiserror::Error;

use crate::moments::MomentSet;

/// Errors produced by the estimation, testing and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("unsupported number of periods T={0}; closed forms are available for T in 3..=5 only")]
    UnsupportedPeriods(usize),

    #[error("orthogonal complement of A_f does not exist for {set} moments with T={t}")]
    NoOrthogonalComplement { set: MomentSet, t: usize },

    #[error("degenerate sample: need at least {needed} individuals, got {got}")]
    DegenerateSample { needed: usize, got: usize },

    #[error("degenerate covariance matrix (condition estimate {condition:e})")]
    DegenerateCovariance { condition: f64 },

    #[error("rank-deficient Jacobian estimate: D'V^-1 D = {value:e}")]
    RankDeficient { value: f64 },

    #[error("theta0 = 1 cannot be combined with effects scaled by 1/(1 - theta0)")]
    SingularInitialization,

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("experiment failed: {failed} of {total} replications raised evaluator errors (last: {last})")]
    Experiment {
        failed: usize,
        total: usize,
        last: String,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the data (singular covariances and the
    /// like) rather than by bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCovariance { .. }
                | Error::RankDeficient { .. }
                | Error::DegenerateSample { .. }
                | Error::Inference(_)
                | Error::Experiment { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
