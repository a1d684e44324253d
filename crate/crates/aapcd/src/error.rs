use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coordinate index {index} out of range (m = {m})")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("power iteration did not converge within {max_iters} iterations")]
    PowerIterationDiverged { max_iters: usize },

    #[error("degenerate dataset: {0}")]
    DegenerateData(String),

    #[error("scripted delay schedule exhausted at iteration {k}")]
    ScheduleExhausted { k: usize },

    #[error("history ring evicted iteration {requested}; capacity {capacity} too small for the requested delay")]
    HistoryEvicted { requested: usize, capacity: usize },

    #[error("series tail bound {bound:.3e} not achievable within {cap} terms")]
    TailBound { bound: f64, cap: usize },

    #[error("divergence guard tripped at iteration {k}: {reason}")]
    Divergence { k: usize, reason: String },

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("rate fit needs at least {needed} positive residuals, found {found}")]
    InsufficientResiduals { needed: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
