//! Content-addressed response and embedding caches.
//!
//! Chat responses are keyed by (model, sha256(prompt), temperature, attempt);
//! the attempt index is part of the key because the protocol re-samples the
//! same prompt at nonzero temperature expecting a different completion on
//! retry. Embeddings are keyed by (model, text).

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::ledger::TokenSource;
use crate::hashing::sha256_hex;

/// A cached chat completion with its usage metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachedCompletion {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub token_source: TokenSource,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(ResponseCache { dir })
    }

    pub fn chat_key(model: &str, prompt_sha256: &str, temperature: f64, attempt: u32) -> String {
        sha256_hex(&format!(
            "chat\x1f{model}\x1f{prompt_sha256}\x1f{temperature:?}\x1f{attempt}"
        ))
    }

    pub fn embedding_key(model: &str, text: &str) -> String {
        sha256_hex(&format!("embed\x1f{model}\x1f{text}"))
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get_chat(&self, key: &str) -> Option<CachedCompletion> {
        let path = self.path_for(key);
        let raw = fs::read_to_string(path).ok()?;
        serde_json::from_str(&raw).ok()
    }

    pub fn put_chat(&self, key: &str, value: &CachedCompletion) -> Result<()> {
        let path = self.path_for(key);
        let raw = serde_json::to_string(value)?;
        fs::write(&path, raw).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn get_embedding(&self, key: &str) -> Option<Vec<f64>> {
        let path = self.path_for(key);
        let raw = fs::read_to_string(path).ok()?;
        serde_json::from_str(&raw).ok()
    }

    pub fn put_embedding(&self, key: &str, vector: &[f64]) -> Result<()> {
        let path = self.path_for(key);
        let raw = serde_json::to_string(vector)?;
        fs::write(&path, raw).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let key = ResponseCache::chat_key("m", "abc", 0.3, 1);
        assert!(cache.get_chat(&key).is_none());
        let value = CachedCompletion {
            text: "[1,2,3]".into(),
            tokens_in: 10,
            tokens_out: 3,
            token_source: TokenSource::Endpoint,
        };
        cache.put_chat(&key, &value).unwrap();
        let loaded = cache.get_chat(&key).unwrap();
        assert_eq!(loaded.text, value.text);
        assert_eq!(loaded.tokens_in, 10);
    }

    #[test]
    fn attempt_index_changes_the_key() {
        let a = ResponseCache::chat_key("m", "abc", 0.3, 1);
        let b = ResponseCache::chat_key("m", "abc", 0.3, 2);
        assert_ne!(a, b);
    }

    #[test]
    fn temperature_changes_the_key() {
        let a = ResponseCache::chat_key("m", "abc", 0.3, 1);
        let b = ResponseCache::chat_key("m", "abc", 0.0, 1);
        assert_ne!(a, b);
    }

    #[test]
    fn embedding_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let key = ResponseCache::embedding_key("m", "some text");
        assert!(cache.get_embedding(&key).is_none());
        cache.put_embedding(&key, &[0.5, -1.0]).unwrap();
        assert_eq!(cache.get_embedding(&key).unwrap(), vec![0.5, -1.0]);
    }
}
