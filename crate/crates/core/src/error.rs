use thiserror::Error;

/// Which declared domain of a dilatation structure was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum DomainSet {
    U,
    V,
    W,
}

impl std::fmt::Display for DomainSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DomainSet::U => write!(f, "U"),
            DomainSet::V => write!(f, "V"),
            DomainSet::W => write!(f, "W"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("non-finite distance at entry ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("exact search over {size} candidate pairs exceeds the capacity {cap}")]
    Capacity { size: usize, cap: usize },

    #[error("point outside the declared domain {set}(x): {detail}")]
    Domain { set: DomainSet, detail: String },

    #[error("sample is not a metric space ({violations} violations)")]
    NotAMetric { violations: usize },

    #[error("no feasible polyline found after {restarts} restarts")]
    Infeasible { restarts: usize },

    #[error("profile at eps={eps} contains no points")]
    EmptyProfile { eps: f64 },

    #[error("structure shows no Radon-Nikodym evidence: {0}")]
    NoRnpEvidence(String),

    #[error("unknown structure `{0}`")]
    UnknownStructure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
