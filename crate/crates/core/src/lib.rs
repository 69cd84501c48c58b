//! Prompt construction, evaluation, and selection for LLM-based recommendation.
//!
//! The pipeline turns review logs into per-user ranking tasks (20 candidates,
//! 2 held-out positives), renders a grid of inference prompts that differ in
//! how the user is represented (item sampling strategy, sample size, item
//! attributes, or a generated preference summary), scores each prompt by
//! nDCG@10 against an OpenAI-compatible endpoint or a deterministic offline
//! oracle, and then selects a prompt per dataset by grid search (GS),
//! relative-performance-indicator analysis (RPI), or a two-tier cheap/expensive
//! strategy (GS*).
//!
//! Modules map onto the pipeline stages:
//!
//! - [`catalog`]: ingestion, dataset statistics, evaluation-split construction
//! - [`promptgrid`]: the prompt grid, item sampling, prompt rendering
//! - [`gateway`]: chat/embedding access, caching, rate limiting, cost ledger
//! - [`metrics`]: ranking parse, nDCG@10, the retry/fallback protocol
//! - [`selector`]: RPI tables and the GS / RPI / GS* selection strategies

pub mod catalog;
pub mod config;
pub mod error;
pub mod gateway;
pub mod hashing;
pub mod manifest;
pub mod metrics;
pub mod promptgrid;
pub mod report;
pub mod results;
pub mod runner;
pub mod selector;
pub mod synth;
pub mod tokenize;

pub use error::{Error, Result};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
