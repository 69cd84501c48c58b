//! OpenAI-compatible wire client: POST {base}/chat/completions and
//! POST {base}/embeddings, with bounded transport retries (3 attempts on
//! connect errors / 429 / 5xx, exponential backoff with jitter).

use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};

const TRANSPORT_ATTEMPTS: u32 = 3;
const BACKOFF_BASE_MS: u64 = 250;

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
}

pub struct ChatResponse {
    pub text: String,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
}

impl Default for HttpClient {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpClient {
    pub fn new() -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(180)))
            .build();
        HttpClient {
            agent: config.into(),
        }
    }

    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value) -> Result<Value> {
        let mut last_err = String::new();
        for attempt in 0..TRANSPORT_ATTEMPTS {
            if attempt > 0 {
                let base = BACKOFF_BASE_MS * (1 << (attempt - 1));
                let jitter = rand::rng().random_range(0..=base / 2);
                std::thread::sleep(Duration::from_millis(base + jitter));
            }
            let mut request = self.agent.post(url);
            if let Some(key) = api_key {
                request = request.header("authorization", &format!("Bearer {key}"));
            }
            match request.send_json(body) {
                Ok(mut response) => {
                    return response
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| Error::Transport(format!("bad response body: {e}")));
                }
                Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                    last_err = format!("HTTP {code}");
                }
                Err(ureq::Error::StatusCode(code)) => {
                    return Err(Error::Transport(format!("HTTP {code} from {url}")));
                }
                Err(e) => {
                    last_err = e.to_string();
                }
            }
        }
        Err(Error::Transport(format!(
            "{url} failed after {TRANSPORT_ATTEMPTS} attempts: {last_err}"
        )))
    }

    pub fn chat(
        &self,
        endpoint_base: &str,
        model: &str,
        temperature: f64,
        prompt: &str,
        api_key: Option<&str>,
    ) -> Result<ChatResponse> {
        let url = format!("{}/chat/completions", endpoint_base.trim_end_matches('/'));
        let body = json!({
            "model": model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let value = self.post_json(&url, api_key, &body)?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Error::Transport("response missing choices[0].message.content".into()))?
            .to_string();
        Ok(ChatResponse {
            text,
            tokens_in: value["usage"]["prompt_tokens"].as_u64(),
            tokens_out: value["usage"]["completion_tokens"].as_u64(),
        })
    }

    pub fn embed(
        &self,
        endpoint_base: &str,
        model: &str,
        texts: &[String],
        api_key: Option<&str>,
    ) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/embeddings", endpoint_base.trim_end_matches('/'));
        let body = json!({ "model": model, "input": texts });
        let value = self.post_json(&url, api_key, &body)?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| Error::Transport("embeddings response missing data".into()))?;
        let mut out = vec![Vec::new(); texts.len()];
        for entry in data {
            let index = entry["index"].as_u64().unwrap_or(out.len() as u64) as usize;
            let vector: Vec<f64> = entry["embedding"]
                .as_array()
                .ok_or_else(|| Error::Transport("embedding entry missing vector".into()))?
                .iter()
                .filter_map(|v| v.as_f64())
                .collect();
            if index >= out.len() {
                return Err(Error::Transport(format!(
                    "embedding index {index} out of range"
                )));
            }
            out[index] = vector;
        }
        Ok(out)
    }
}
