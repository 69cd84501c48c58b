//! Whitespace normalization and token-count estimation.
//!
//! Exact vendor tokenizers are out of scope; dataset statistics only need
//! coarse buckets (whitespace word counts) and context-limit guarding only
//! needs a conservative estimate (bytes / 4).

use serde::{Deserialize, Serialize};

/// Trim the ends and collapse internal whitespace runs to single spaces.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Pluggable token estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenEstimator {
    /// Whitespace-separated word count. Default for dataset statistics.
    Words,
    /// `ceil(len / 4)` byte heuristic. Default for context-limit guarding.
    BytesPer4,
}

impl TokenEstimator {
    pub fn estimate(&self, text: &str) -> usize {
        match self {
            TokenEstimator::Words => text.split_whitespace().count(),
            TokenEstimator::BytesPer4 => text.len().div_ceil(4),
        }
    }
}
