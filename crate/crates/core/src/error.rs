use thiserror::Error;

use crate::environment::LadderDecomposition;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("site {site} outside environment window [{lo}, {hi})")]
    Index { site: i64, lo: i64, hi: i64 },

    /// `i > j`; the caller has to treat the empty product as 1 itself.
    #[error("empty product range: {i} > {j}")]
    EmptyRange { i: i64, j: i64 },

    #[error("environment window exhausted after {found} of {wanted} ladder blocks")]
    PartialLadder {
        found: usize,
        wanted: usize,
        partial: Box<LadderDecomposition>,
    },

    #[error("runaway block: no ladder location within {cap} sites")]
    RunawayBlock { cap: usize },

    #[error("no root of E[rho^g] = 1 for g in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error(
        "insufficient left context: reflection site {needed} lies left of window start {available}{}",
        extra_blocks.map(|b| format!(" ({b} more ladder blocks required)")).unwrap_or_default()
    )]
    InsufficientContext {
        needed: i64,
        available: i64,
        extra_blocks: Option<usize>,
    },

    #[error("walk left the environment window; sites [{lo}, {hi}) are needed")]
    WindowExhausted { lo: i64, hi: i64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
