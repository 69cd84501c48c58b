//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at {path}:{line}: {msg}")]
    MalformedRecord {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("interaction at {path}:{line} references unknown item {item_id}")]
    UnknownItem {
        path: String,
        line: usize,
        item_id: String,
    },

    #[error("duplicate item_id {item_id} at {path}:{line}")]
    DuplicateItem {
        path: String,
        line: usize,
        item_id: String,
    },

    #[error("catalog is empty")]
    EmptyCatalog,

    #[error("requested {requested} users but only {available} are eligible")]
    NotEnoughUsers { requested: usize, available: usize },

    #[error("catalog too small to draw {needed} non-interacted items for user {user_id}")]
    CatalogTooSmall { user_id: String, needed: usize },

    #[error("empty grid dimension: {0}")]
    EmptyGridDimension(String),

    #[error("unparseable prompt spec name: {0}")]
    BadSpecName(String),

    #[error("prompt for user {user_id} / {spec} estimated at {tokens} tokens, over the {limit}-token context limit")]
    ContextOverflow {
        spec: String,
        user_id: String,
        tokens: usize,
        limit: usize,
    },

    #[error("zero-norm embedding vector for item {0}; cosine similarity undefined")]
    ZeroNormEmbedding(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    EmbeddingDimension { expected: usize, got: usize },

    #[error("no stored embedding for text: {0}")]
    MissingEmbedding(String),

    #[error("unrecognized prompt shape passed to the mock oracle")]
    UnrecognizedPrompt,

    #[error("transport failure after retries: {0}")]
    Transport(String),

    #[error("result grid incomplete; missing: {}", .0.join(", "))]
    IncompleteGrid(Vec<String>),

    #[error("mean nDCG for {0} is zero; RPI ratio undefined")]
    ZeroAccuracy(String),

    #[error("empty shortlist")]
    EmptyShortlist,

    #[error("instances span multiple datasets: {0} vs {1}")]
    DatasetMismatch(String, String),

    #[error("two-tier expensive phase failed after evaluating {}: {cause}", .evaluated.iter().map(|(s, n)| format!("{s}={n:.4}")).collect::<Vec<_>>().join(", "))]
    TwoTierFailed {
        evaluated: Vec<(String, f64)>,
        #[source]
        cause: Box<Error>,
    },

    #[error("budget exceeded: {spent:.4} USD spent of {cap:.4} USD cap")]
    BudgetExceeded { spent: f64, cap: f64 },

    #[error("output directory is locked by another run (pid {pid}): {path}")]
    Locked { path: String, pid: String },

    #[error("manifest mismatch: stored config hash {stored} != current {current}; refusing to reuse {out_dir}")]
    ManifestMismatch {
        stored: String,
        current: String,
        out_dir: String,
    },

    #[error("stage `{0}` has not completed; run it first")]
    StageIncomplete(String),

    #[error("config: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 0 ok / 1 usage / 2 data / 3 upstream / 4 budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Transport(_) => 3,
            Error::BudgetExceeded { .. } => 4,
            Error::TwoTierFailed { cause, .. } => cause.exit_code(),
            _ => 2,
        }
    }
}
