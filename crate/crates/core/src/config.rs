//! The run configuration file (TOML) and its validation.
//!
//! One file drives the whole pipeline. Seeds are explicit integers: there
//! are no wall-clock defaults anywhere: and the API key is named by an
//! environment variable, never stored in the config or manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ModelKind, ModelProfile};
use crate::hashing::sha256_hex;
use crate::promptgrid::{AttrCombo, GridConfig, SampleFormat};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub eval: EvalSection,
    pub models: ModelsSection,
    pub datasets: Vec<DatasetConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    pub out_dir: PathBuf,
    /// Master seed for sampling, shuffles, and fallback rankings.
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_true")]
    pub cache: bool,
    /// Hard stop once the ledger reaches this spend.
    #[serde(default)]
    pub budget_usd: Option<f64>,
    /// Template file; the built-in template is used when absent.
    #[serde(default)]
    pub template_file: Option<PathBuf>,
}

fn default_concurrency() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub formats: Vec<String>,
    pub sizes: Vec<u32>,
    pub attrs: Vec<String>,
    pub summary_sizes: BTreeMap<String, u32>,
    pub context_limit: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let grid = GridConfig::default();
        GridSection {
            formats: grid.formats.iter().map(|f| f.letter().to_string()).collect(),
            sizes: grid.sizes.clone(),
            attrs: grid.attrs.iter().map(|a| a.name().to_string()).collect(),
            summary_sizes: grid
                .summary_sizes
                .iter()
                .map(|(a, k)| (a.name().to_string(), *k))
                .collect(),
            context_limit: grid.context_limit,
        }
    }
}

impl GridSection {
    pub fn to_grid_config(&self) -> Result<GridConfig> {
        let formats = self
            .formats
            .iter()
            .map(|f| {
                SampleFormat::from_letter(f)
                    .ok_or_else(|| Error::Config(format!("unknown format letter `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let attrs = self
            .attrs
            .iter()
            .map(|a| a.parse::<AttrCombo>())
            .collect::<Result<Vec<_>>>()?;
        let mut summary_sizes = BTreeMap::new();
        for (name, k) in &self.summary_sizes {
            summary_sizes.insert(name.parse::<AttrCombo>()?, *k);
        }
        Ok(GridConfig {
            formats,
            sizes: self.sizes.clone(),
            attrs,
            summary_sizes,
            context_limit: self.context_limit,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub n_pos: usize,
    pub n_neg: usize,
    pub max_attempts: u32,
    pub ndcg_k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_pos: 2,
            n_neg: 18,
            max_attempts: 10,
            ndcg_k: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelsSection {
    pub cheap: ModelConfig,
    pub expensive: ModelConfig,
    pub embedding: ModelConfig,
    /// Stand-alone offline profile selectable with `--model mock`.
    pub mock: ModelConfig,
}

/// Which backend serves a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "provider")]
pub enum ProviderConfig {
    /// OpenAI-compatible HTTP endpoint.
    Openai {
        endpoint: String,
        /// Environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
    },
    /// Deterministic offline oracle / embedder.
    Mock {
        oracle_seed: u64,
        #[serde(default)]
        epsilon: f64,
        #[serde(default)]
        fail_first: u32,
        #[serde(default = "default_embed_dim")]
        embed_dim: usize,
    },
    /// Precomputed embeddings file (embedding profiles only).
    File { path: PathBuf },
}

fn default_embed_dim() -> usize {
    24
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(flatten)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub price_in: f64,
    #[serde(default)]
    pub price_out: f64,
    #[serde(default = "default_context_limit")]
    pub context_limit: usize,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
}

fn default_context_limit() -> usize {
    16_384
}

fn default_rpm() -> u32 {
    500
}

impl ModelConfig {
    pub fn profile(&self, kind: ModelKind) -> ModelProfile {
        let endpoint_base = match &self.provider {
            ProviderConfig::Openai { endpoint, .. } => endpoint.clone(),
            _ => String::new(),
        };
        ModelProfile {
            name: self.name.clone(),
            endpoint_base,
            kind,
            temperature: self.temperature,
            price_in: self.price_in,
            price_out: self.price_out,
            context_limit: self.context_limit,
            requests_per_minute: self.requests_per_minute,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    /// Role line noun, e.g. "music".
    pub genre: String,
    pub reviews: PathBuf,
    pub catalog: PathBuf,
    #[serde(default = "default_min_rating")]
    pub min_rating: f64,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    pub n_validation_users: usize,
    pub n_test_users: usize,
    /// Per-dataset seed for the user partition and candidate draws.
    pub seed: u64,
}

fn default_min_rating() -> f64 {
    3.0
}

fn default_min_count() -> usize {
    30
}

/// A loaded config plus the hash of its raw bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub config_sha256: String,
    pub config_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: RunConfig =
            toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let loaded = LoadedConfig {
            config,
            config_sha256: sha256_hex(&raw),
            config_dir: path
                .parent()
                .map(|p| p.to_path_buf())
                .unwrap_or_else(|| PathBuf::from(".")),
        };
        loaded.validate()?;
        Ok(loaded)
    }

    /// Paths in the config are relative to the config file.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.config_dir.join(path)
        }
    }

    fn validate(&self) -> Result<()> {
        let config = &self.config;
        if config.datasets.is_empty() {
            return Err(Error::Config("no [[datasets]] configured".into()));
        }
        for dataset in &config.datasets {
            if !(1.0..=5.0).contains(&dataset.min_rating) {
                return Err(Error::Config(format!(
                    "dataset {}: min_rating must be in [1,5]",
                    dataset.name
                )));
            }
            if dataset.min_count == 0 {
                return Err(Error::Config(format!(
                    "dataset {}: min_count must be >= 1",
                    dataset.name
                )));
            }
            for path in [&dataset.reviews, &dataset.catalog] {
                let resolved = self.resolve(path);
                if !resolved.exists() {
                    return Err(Error::Config(format!(
                        "dataset {}: missing file {}",
                        dataset.name,
                        resolved.display()
                    )));
                }
            }
        }
        config.grid.to_grid_config()?;
        for (label, model, kind) in [
            ("cheap", &config.models.cheap, ModelKind::Chat),
            ("expensive", &config.models.expensive, ModelKind::Chat),
            ("mock", &config.models.mock, ModelKind::Chat),
            ("embedding", &config.models.embedding, ModelKind::Embedding),
        ] {
            model
                .profile(kind)
                .validate()
                .map_err(|e| Error::Config(format!("models.{label}: {e}")))?;
            if kind == ModelKind::Chat && matches!(model.provider, ProviderConfig::File { .. }) {
                return Err(Error::Config(format!(
                    "models.{label}: file provider is only valid for embeddings"
                )));
            }
        }
        Ok(())
    }

    pub fn model(&self, which: &str) -> Result<&ModelConfig> {
        match which {
            "cheap" => Ok(&self.config.models.cheap),
            "expensive" => Ok(&self.config.models.expensive),
            "mock" => Ok(&self.config.models.mock),
            other => Err(Error::Usage(format!(
                "unknown model `{other}` (expected cheap, expensive, or mock)"
            ))),
        }
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetConfig> {
        self.config
            .datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Usage(format!("unknown dataset `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn minimal_config(dir: &Path) -> PathBuf {
        let items = dir.join("items.jsonl");
        let reviews = dir.join("reviews.jsonl");
        std::fs::write(&items, "{\"item_id\":\"a\"}\n").unwrap();
        std::fs::write(&reviews, "").unwrap();
        let path = dir.join("run.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        write!(
            f,
            r#"
[run]
out_dir = "out"
seed = 7

[models.cheap]
name = "gpt-4o-mini"
provider = "openai"
endpoint = "https://api.openai.com/v1"
api_key_env = "OPENAI_API_KEY"
temperature = 0.3
price_in = 0.15
price_out = 0.60

[models.expensive]
name = "gpt-4o"
provider = "openai"
endpoint = "https://api.openai.com/v1"
api_key_env = "OPENAI_API_KEY"
temperature = 0.3
price_in = 2.50
price_out = 10.00

[models.mock]
name = "mock-chat"
provider = "mock"
oracle_seed = 11
epsilon = 0.15
temperature = 0.3

[models.embedding]
name = "mock-embed"
provider = "mock"
oracle_seed = 12

[[datasets]]
name = "music"
genre = "music"
reviews = "reviews.jsonl"
catalog = "items.jsonl"
n_validation_users = 10
n_test_users = 10
seed = 3
"#
        )
        .unwrap();
        path
    }

    #[test]
    fn loads_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        let loaded = LoadedConfig::load(&path).unwrap();
        assert_eq!(loaded.config.datasets[0].min_rating, 3.0);
        assert_eq!(loaded.config.datasets[0].min_count, 30);
        assert_eq!(loaded.config.eval.n_pos, 2);
        assert_eq!(loaded.config.eval.n_neg, 18);
        assert_eq!(loaded.config.eval.max_attempts, 10);
        let grid = loaded.config.grid.to_grid_config().unwrap();
        assert_eq!(grid, GridConfig::default());
        assert_eq!(loaded.config.models.cheap.temperature, 0.3);
    }

    #[test]
    fn missing_dataset_file_fails_naming_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        std::fs::remove_file(dir.path().join("items.jsonl")).unwrap();
        let err = LoadedConfig::load(&path).unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("items.jsonl"), "{msg}"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn config_hash_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        let a = LoadedConfig::load(&path).unwrap().config_sha256;
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        writeln!(f, "# trailing comment").unwrap();
        let b = LoadedConfig::load(&path).unwrap().config_sha256;
        assert_ne!(a, b);
    }

    use std::fs::OpenOptions;
}
