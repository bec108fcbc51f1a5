use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("episode has terminated; call reset before stepping")]
    EpisodeOver,

    #[error("action {action} out of range for {num_actions} actions")]
    InvalidAction { action: usize, num_actions: usize },

    #[error("invalid observation mask: {0}")]
    InvalidMask(String),

    #[error("invalid block: {0}")]
    InvalidBlock(String),

    #[error("n-step horizon {n} out of range (1..={max})")]
    HorizonOutOfRange { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("state has no tabular id or id {0:?} is out of range")]
    MissingStateId(Option<usize>),

    #[error("non-finite training target {0}")]
    NonFiniteTarget(f64),

    #[error("empty training batch")]
    EmptyBatch,

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("replay memory holds {len} transitions, need at least {needed}")]
    MemoryTooSmall { len: usize, needed: usize },

    #[error("cache size {cache_size} is not a multiple of block size {block}")]
    CacheNotDivisible { cache_size: usize, block: usize },

    #[error("loss diverged (non-finite) at refresh {refresh}")]
    Diverged { refresh: usize },

    #[error("refresh cost differs across memory capacities: {0}")]
    RefreshCostMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed CSV {path}: {reason}")]
    MalformedCsv { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
