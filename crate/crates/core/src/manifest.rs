//! Run manifest and output-directory lock.
//!
//! The manifest pins what a run was (config hash, template hash, spec list,
//! software version) and which stages completed. Resuming against a changed
//! config refuses to reuse prior outputs. Reports cite `run_id`, a digest of
//! the pinned hashes that is stable across resumes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub template_sha256: String,
    pub version: String,
    pub specs: Vec<String>,
    /// Stage name -> completed. Stage names look like "ingest/music" or
    /// "run/music/validation/mock".
    #[serde(default)]
    pub stages: BTreeMap<String, bool>,
    /// Set when a run stopped early (budget cap); reports flag it.
    #[serde(default)]
    pub partial: bool,
}

impl RunManifest {
    pub fn new(config_sha256: &str, template_sha256: &str, specs: Vec<String>) -> Self {
        RunManifest {
            config_sha256: config_sha256.to_string(),
            template_sha256: template_sha256.to_string(),
            version: crate::VERSION.to_string(),
            specs,
            stages: BTreeMap::new(),
            partial: false,
        }
    }

    pub fn path(out_dir: &Path) -> PathBuf {
        out_dir.join("manifest.json")
    }

    pub fn load(out_dir: &Path) -> Result<Option<Self>> {
        let path = Self::path(out_dir);
        if !path.exists() {
            return Ok(None);
        }
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(Some(serde_json::from_str(&raw)?))
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        let path = Self::path(out_dir);
        fs::write(&path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Load the manifest for this config, or start one. A stored manifest
    /// with a different config hash is refused.
    pub fn load_or_create(
        out_dir: &Path,
        config_sha256: &str,
        template_sha256: &str,
        specs: Vec<String>,
    ) -> Result<Self> {
        match Self::load(out_dir)? {
            Some(existing) => {
                if existing.config_sha256 != config_sha256 {
                    return Err(Error::ManifestMismatch {
                        stored: existing.config_sha256,
                        current: config_sha256.to_string(),
                        out_dir: out_dir.display().to_string(),
                    });
                }
                Ok(existing)
            }
            None => {
                let manifest = Self::new(config_sha256, template_sha256, specs);
                manifest.save(out_dir)?;
                Ok(manifest)
            }
        }
    }

    /// Stable identifier cited by every report.
    pub fn run_id(&self) -> String {
        sha256_hex(&format!(
            "{}\x1f{}\x1f{}",
            self.config_sha256, self.template_sha256, self.version
        ))[..12]
            .to_string()
    }

    pub fn mark_stage(&mut self, stage: &str, done: bool) {
        self.stages.insert(stage.to_string(), done);
    }

    pub fn stage_done(&self, stage: &str) -> bool {
        self.stages.get(stage).copied().unwrap_or(false)
    }
}

/// Exclusive ownership of an output directory while a process runs.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        let path = out_dir.join(".lock");
        if path.exists() {
            let holder = fs::read_to_string(&path).unwrap_or_default();
            let pid = holder.trim();
            if process_alive(pid) {
                return Err(Error::Locked {
                    path: path.display().to_string(),
                    pid: pid.to_string(),
                });
            }
            eprintln!("warn: replacing stale lock left by pid {pid}");
            let _ = fs::remove_file(&path);
        }
        fs::write(&path, std::process::id().to_string())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(DirLock { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn process_alive(pid: &str) -> bool {
    match pid.parse::<u32>() {
        Ok(pid) => Path::new(&format!("/proc/{pid}")).exists(),
        Err(_) => false,
    }
}
