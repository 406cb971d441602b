use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("no edges")]
    NoEdges,

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{0}")]
    Domain(String),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("counterfactual permutation undefined for a batch of size {0}")]
    BatchTooSmall(usize),

    #[error("all loss terms ablated")]
    AllTermsAblated,

    #[error("non-finite value in loss term `{term}` at epoch {epoch}")]
    NonFiniteLoss { term: &'static str, epoch: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
