use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid config: {0}")]
    Config(String),

    /// Log-probability difference against the rollout snapshot exceeded the overflow guard.
    #[error("ratio overflow at response {response}, token {token}: |log ratio| = {log_ratio}")]
    RatioOverflow {
        response: usize,
        token: usize,
        log_ratio: f64,
    },

    /// Reference log-probability exceeds the current one by more than the guard.
    #[error("KL penalty overflow: logp_ref - logp_cur = {0}")]
    KlOverflow(f64),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
