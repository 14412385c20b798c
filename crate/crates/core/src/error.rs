use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("graph must have at least two nodes")]
    DegenerateGraph,

    #[error("graph is not connected (lambda_2 = {lambda2:.3e} below tolerance)")]
    Disconnected { lambda2: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelCountMismatch { expected: usize, got: usize },

    #[error("sector bounds invalid: {0}")]
    InvalidSector(String),

    #[error("variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("LMI problem infeasible{}", detail_suffix(.0))]
    Infeasible(Option<String>),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix not invertible to tolerance: {0}")]
    SingularX(String),

    #[error("no feasible decay rate in the searched interval")]
    NoneFeasible,

    #[error("state diverged (|state| > {guard:.1e}) at t = {t}")]
    NonFiniteState { t: f64, guard: f64 },
}

fn detail_suffix(detail: &Option<String>) -> String {
    match detail {
        Some(d) => format!(": {d}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
