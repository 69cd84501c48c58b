//! Chat-completion and embedding access with caching, rate limiting, and a
//! cost ledger.
//!
//! The gateway is shareable across worker threads: the ledger and cache are
//! mutex-guarded, rate limiting is per model, and every determinism guarantee
//! is stated per (prompt, attempt) key, so results are independent of
//! scheduling order.

mod cache;
mod http;
mod ledger;
mod mock;
mod ratelimit;

pub use cache::{CachedCompletion, ResponseCache};
pub use http::{ChatResponse, HttpClient};
pub use ledger::{cost_report, CallOutcome, CallRecord, CostBreakdownRow, CostReport, TokenSource};
pub use mock::{MockEmbedder, MockOracle};
pub use ratelimit::RateLimiter;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::promptgrid::{Embedder, EmbeddingText, PromptText};
use crate::tokenize::TokenEstimator;

/// What kind of endpoint a profile points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Chat,
    Embedding,
}

/// One model endpoint with its pricing and limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub endpoint_base: String,
    pub kind: ModelKind,
    pub temperature: f64,
    /// USD per 1M input tokens.
    pub price_in: f64,
    /// USD per 1M output tokens.
    pub price_out: f64,
    pub context_limit: usize,
    pub requests_per_minute: u32,
}

impl ModelProfile {
    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "model {}: temperature must be >= 0",
                self.name
            )));
        }
        if self.price_in < 0.0 || self.price_out < 0.0 {
            return Err(Error::Config(format!(
                "model {}: prices must be >= 0",
                self.name
            )));
        }
        if self.context_limit == 0 {
            return Err(Error::Config(format!(
                "model {}: context_limit must be > 0",
                self.name
            )));
        }
        if self.requests_per_minute == 0 {
            return Err(Error::Config(format!(
                "model {}: requests_per_minute must be > 0",
                self.name
            )));
        }
        Ok(())
    }
}

/// Chat backend behind a profile.
pub enum ChatBackend {
    Http { client: HttpClient, api_key: Option<String> },
    Mock(MockOracle),
}

/// Embedding backend behind a profile.
pub enum EmbedBackend {
    Http { client: HttpClient, api_key: Option<String> },
    Mock(MockEmbedder),
    /// Precomputed JSON-lines file: one `{"text": ..., "vector": [...]}` object per line.
    File(HashMap<String, Vec<f64>>),
}

impl EmbedBackend {
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut map = HashMap::new();
        #[derive(Deserialize)]
        struct Row {
            text: String,
            vector: Vec<f64>,
        }
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            map.insert(row.text, row.vector);
        }
        Ok(EmbedBackend::File(map))
    }
}

struct LedgerInner {
    records: Vec<CallRecord>,
    flushed: usize,
    /// Spend carried over from a resumed run's ledger file.
    prior_usd: f64,
}

/// Shared access point for completions and embeddings.
pub struct Gateway {
    chat_backend: ChatBackend,
    embed_backend: EmbedBackend,
    cache: Option<ResponseCache>,
    ledger: Mutex<LedgerInner>,
    limiters: Mutex<HashMap<String, RateLimiter>>,
    embed_memo: Mutex<HashMap<String, Vec<f64>>>,
    upstream_calls: AtomicU64,
    estimator: TokenEstimator,
    started: Instant,
}

impl Gateway {
    pub fn new(chat_backend: ChatBackend, embed_backend: EmbedBackend, cache: Option<ResponseCache>) -> Self {
        Gateway {
            chat_backend,
            embed_backend,
            cache,
            ledger: Mutex::new(LedgerInner {
                records: Vec::new(),
                flushed: 0,
                prior_usd: 0.0,
            }),
            limiters: Mutex::new(HashMap::new()),
            embed_memo: Mutex::new(HashMap::new()),
            upstream_calls: AtomicU64::new(0),
            estimator: TokenEstimator::BytesPer4,
            started: Instant::now(),
        }
    }

    /// Fully offline gateway used by tests and mock runs.
    pub fn mock(oracle: MockOracle, embedder: MockEmbedder, cache: Option<ResponseCache>) -> Self {
        Gateway::new(ChatBackend::Mock(oracle), EmbedBackend::Mock(embedder), cache)
    }

    /// Number of requests that actually reached a backend (cache misses).
    pub fn upstream_call_count(&self) -> u64 {
        self.upstream_calls.load(Ordering::SeqCst)
    }

    /// Total spend including any carried-over prior ledger.
    pub fn total_usd(&self) -> f64 {
        let inner = self.ledger.lock().unwrap();
        inner.prior_usd + inner.records.iter().map(|r| r.cost_usd).sum::<f64>()
    }

    pub fn set_prior_usd(&self, usd: f64) {
        self.ledger.lock().unwrap().prior_usd = usd;
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.ledger.lock().unwrap().records.clone()
    }

    pub fn cost_report(&self) -> CostReport {
        let records = self.records();
        cost_report(&records, self.started.elapsed().as_millis() as u64)
    }

    /// Send one chat completion attempt.
    ///
    /// Mirrors the retry protocol's view: one call per attempt index, cached
    /// per (model, prompt, temperature, attempt). Returns the completion text
    /// and the ledger index of the appended record.
    pub fn chat_complete(
        &self,
        profile: &ModelProfile,
        prompt: &PromptText,
        attempt: u32,
        dataset: &str,
    ) -> Result<(String, usize)> {
        if profile.kind != ModelKind::Chat {
            return Err(Error::Config(format!(
                "model {} is not a chat profile",
                profile.name
            )));
        }
        if prompt.estimated_tokens > profile.context_limit {
            // Rejected locally without a call and without a ledger entry.
            return Err(Error::ContextOverflow {
                spec: prompt.spec.name(),
                user_id: prompt.user_id.clone(),
                tokens: prompt.estimated_tokens,
                limit: profile.context_limit,
            });
        }

        let prompt_sha = sha256_hex(&prompt.text);
        let key = ResponseCache::chat_key(&profile.name, &prompt_sha, profile.temperature, attempt);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get_chat(&key) {
                let idx = self.append(CallRecord {
                    model: profile.name.clone(),
                    dataset: dataset.to_string(),
                    spec: prompt.spec.name(),
                    prompt_sha256: prompt_sha,
                    attempt,
                    tokens_in: 0,
                    tokens_out: 0,
                    latency_ms: 0,
                    cost_usd: 0.0,
                    outcome: CallOutcome::Ok,
                    cached: true,
                    token_source: hit.token_source,
                });
                return Ok((hit.text, idx));
            }
        }

        let start = Instant::now();
        let result = match &self.chat_backend {
            ChatBackend::Mock(oracle) => oracle
                .complete(&prompt.text, attempt)
                .map(|text| (text, None, None)),
            ChatBackend::Http { client, api_key } => {
                self.block_on_limiter(&profile.name, profile.requests_per_minute);
                client
                    .chat(
                        &profile.endpoint_base,
                        &profile.name,
                        profile.temperature,
                        &prompt.text,
                        api_key.as_deref(),
                    )
                    .map(|r| (r.text, r.tokens_in, r.tokens_out))
            }
        };
        self.upstream_calls.fetch_add(1, Ordering::SeqCst);
        let latency_ms = start.elapsed().as_millis() as u64;

        match result {
            Ok((text, tokens_in, tokens_out)) => {
                let token_source = if tokens_in.is_some() {
                    TokenSource::Endpoint
                } else {
                    TokenSource::Estimated
                };
                let tokens_in = tokens_in.unwrap_or(prompt.estimated_tokens as u64);
                let tokens_out = tokens_out.unwrap_or(self.estimator.estimate(&text) as u64);
                let cost_usd =
                    CallRecord::compute_cost(tokens_in, tokens_out, profile.price_in, profile.price_out);
                if let Some(cache) = &self.cache {
                    cache.put_chat(
                        &key,
                        &CachedCompletion {
                            text: text.clone(),
                            tokens_in,
                            tokens_out,
                            token_source,
                        },
                    )?;
                }
                let idx = self.append(CallRecord {
                    model: profile.name.clone(),
                    dataset: dataset.to_string(),
                    spec: prompt.spec.name(),
                    prompt_sha256: prompt_sha,
                    attempt,
                    tokens_in,
                    tokens_out,
                    latency_ms,
                    cost_usd,
                    outcome: CallOutcome::Ok,
                    cached: false,
                    token_source,
                });
                Ok((text, idx))
            }
            Err(err) => {
                self.append(CallRecord {
                    model: profile.name.clone(),
                    dataset: dataset.to_string(),
                    spec: prompt.spec.name(),
                    prompt_sha256: prompt_sha,
                    attempt,
                    tokens_in: 0,
                    tokens_out: 0,
                    latency_ms,
                    cost_usd: 0.0,
                    outcome: CallOutcome::TransportError,
                    cached: false,
                    token_source: TokenSource::Estimated,
                });
                Err(err)
            }
        }
    }

    /// Mark an earlier successful call as a parse reject.
    pub fn record_parse_reject(&self, record_idx: usize) {
        let mut inner = self.ledger.lock().unwrap();
        if let Some(record) = inner.records.get_mut(record_idx) {
            record.outcome = CallOutcome::ParseReject;
        }
    }

    /// Embed texts, order-preserving, cached per (model, text).
    pub fn embed(&self, profile: &ModelProfile, texts: &[EmbeddingText]) -> Result<Vec<Vec<f64>>> {
        let model = &profile.name;
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        let mut missing: Vec<usize> = Vec::new();
        {
            let memo = self.embed_memo.lock().unwrap();
            for (i, t) in texts.iter().enumerate() {
                let key = ResponseCache::embedding_key(model, &t.text);
                if let Some(v) = memo.get(&key) {
                    out[i] = Some(v.clone());
                } else if let Some(cache) = &self.cache {
                    if let Some(v) = cache.get_embedding(&key) {
                        out[i] = Some(v);
                        continue;
                    }
                    missing.push(i);
                } else {
                    missing.push(i);
                }
            }
        }

        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].text.clone()).collect();
            let vectors = match &self.embed_backend {
                EmbedBackend::Mock(embedder) => embedder.embed(&batch)?,
                EmbedBackend::File(map) => {
                    let mut vs = Vec::with_capacity(batch.len());
                    for text in &batch {
                        vs.push(
                            map.get(text)
                                .cloned()
                                .ok_or_else(|| Error::MissingEmbedding(text.clone()))?,
                        );
                    }
                    vs
                }
                EmbedBackend::Http { client, api_key } => {
                    self.block_on_limiter(model, profile.requests_per_minute);
                    self.upstream_calls.fetch_add(1, Ordering::SeqCst);
                    client.embed(&profile.endpoint_base, model, &batch, api_key.as_deref())?
                }
            };
            if vectors.len() != batch.len() {
                return Err(Error::Config(format!(
                    "embedding backend returned {} vectors for {} texts",
                    vectors.len(),
                    batch.len()
                )));
            }
            let mut memo = self.embed_memo.lock().unwrap();
            for (&i, vector) in missing.iter().zip(vectors) {
                let key = ResponseCache::embedding_key(model, &texts[i].text);
                if let Some(cache) = &self.cache {
                    cache.put_embedding(&key, &vector)?;
                }
                memo.insert(key, vector.clone());
                out[i] = Some(vector);
            }
        }

        let vectors: Vec<Vec<f64>> = out.into_iter().map(|v| v.expect("filled")).collect();
        if let Some(first) = vectors.first() {
            let dim = first.len();
            for v in &vectors {
                if v.len() != dim {
                    return Err(Error::EmbeddingDimension {
                        expected: dim,
                        got: v.len(),
                    });
                }
            }
        }
        Ok(vectors)
    }

    fn block_on_limiter(&self, model: &str, rpm: u32) {
        loop {
            let wait = {
                let mut limiters = self.limiters.lock().unwrap();
                let limiter = limiters
                    .entry(model.to_string())
                    .or_insert_with(|| RateLimiter::per_minute(rpm));
                limiter.acquire(Instant::now())
            };
            match wait {
                None => return,
                Some(d) => std::thread::sleep(d),
            }
        }
    }

    /// Append records gathered since the last flush to a JSON-lines file.
    pub fn flush_ledger(&self, path: &Path) -> Result<()> {
        let mut inner = self.ledger.lock().unwrap();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let start = inner.flushed;
        for record in &inner.records[start..] {
            writeln!(file, "{}", serde_json::to_string(record)?)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        inner.flushed = inner.records.len();
        Ok(())
    }

    fn append(&self, record: CallRecord) -> usize {
        let mut inner = self.ledger.lock().unwrap();
        inner.records.push(record);
        inner.records.len() - 1
    }
}

/// Load a ledger file written by `flush_ledger`.
pub fn load_ledger(path: &Path) -> Result<Vec<CallRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CallRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => break, // torn tail from an interrupted run
        }
    }
    Ok(records)
}

/// Adapter exposing gateway embeddings as a sampling `Embedder`.
pub struct GatewayEmbedder<'a> {
    pub gateway: &'a Gateway,
    pub profile: &'a ModelProfile,
}

impl Embedder for GatewayEmbedder<'_> {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let wrapped: Vec<EmbeddingText> = texts
            .iter()
            .map(|t| EmbeddingText {
                item_id: String::new(),
                text: t.clone(),
            })
            .collect();
        self.gateway.embed(self.profile, &wrapped)
    }
}
