use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("not full rank: {0}")]
    NotFullRank(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invariance infeasible: {0}")]
    InvarianceInfeasible(String),

    #[error("combinatorial limit exceeded: {0}")]
    CombinatorialLimit(String),

    #[error("outside resilience lattice: {0}")]
    OutsideLattice(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("eigensolver failed to converge")]
    EigenFailure,

    #[error("tolerance violated: {0}")]
    Tolerance(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate scores: all values zero with alpha = 0")]
    DegenerateScores,

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("learning did not converge: {0}")]
    NoConvergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
