use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The arcsin / square-root argument of the bicycle update left its domain.
    #[error("infeasible control: v = {v}, steer = {steer} (|dt v sin(steer)| exceeds the wheelbase)")]
    InfeasibleControl { v: f64, steer: f64 },

    #[error("rollout failed at step {step}: v = {v}, steer = {steer}")]
    InfeasibleStep { step: usize, v: f64, steer: f64 },

    #[error("length mismatch in {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("no trajectory for type-player {0}")]
    MissingTrajectory(usize),

    #[error("agent {0} has no types")]
    NoTypes(usize),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("edge {edge} is not adjacent to vertex {vertex}")]
    NotAdjacent { vertex: usize, edge: usize },

    #[error("vertex {vertex} is missing the message for edge {edge}")]
    MissingMessage { vertex: usize, edge: usize },

    #[error("branching step {t_b} outside 0..={horizon}")]
    BranchOutOfRange { t_b: usize, horizon: usize },

    #[error("stage cost is not positive definite at step {0}")]
    NotPositiveDefinite(usize),

    #[error("singular linear system")]
    Singular,
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Prefixes the field path of a config error with `prefix`; other errors pass through.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::Config { field, reason } => Error::Config {
                field: alloc::format!("{prefix}.{field}"),
                reason,
            },
            other => other,
        }
    }
}
