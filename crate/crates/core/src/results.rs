//! Append-only per-user result rows and the derived summary table.
//!
//! Rows land in results.jsonl as they are produced; completed
//! (split, model, dataset, spec, user) keys are skipped on resume, so a
//! killed run continues without duplicates. A torn final line from an
//! interrupted write is truncated away on load.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EvalResult, PromptResult, ResultGrid};
use crate::promptgrid::PromptSpec;

/// One results.jsonl row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub spec: String,
    pub user_id: String,
    pub ndcg: f64,
    pub attempts: u32,
    pub fallback: bool,
    pub split: String,
    pub model: String,
}

impl ResultRow {
    pub fn key(&self) -> (String, String, String, String, String) {
        (
            self.split.clone(),
            self.model.clone(),
            self.dataset.clone(),
            self.spec.clone(),
            self.user_id.clone(),
        )
    }

    pub fn from_eval(result: &EvalResult, dataset: &str, split: &str, model: &str) -> Self {
        ResultRow {
            dataset: dataset.to_string(),
            spec: result.spec.name(),
            user_id: result.user_id.clone(),
            ndcg: result.ndcg,
            attempts: result.attempts_used,
            fallback: result.fell_back_random,
            split: split.to_string(),
            model: model.to_string(),
        }
    }

    fn to_eval(&self) -> Result<EvalResult> {
        Ok(EvalResult {
            user_id: self.user_id.clone(),
            spec: self.spec.parse()?,
            ndcg: self.ndcg,
            attempts_used: self.attempts,
            fell_back_random: self.fallback,
        })
    }
}

pub struct ResultStore {
    path: PathBuf,
    rows: Vec<ResultRow>,
    keys: HashSet<(String, String, String, String, String)>,
}

impl ResultStore {
    /// Load (or start) a store at `path`, truncating any torn final line.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut rows = Vec::new();
        let mut keys = HashSet::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let mut good_bytes: u64 = 0;
            let mut torn = false;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
                match serde_json::from_str::<ResultRow>(&line) {
                    Ok(row) => {
                        good_bytes += line.len() as u64 + 1;
                        keys.insert(row.key());
                        rows.push(row);
                    }
                    Err(_) => {
                        torn = true;
                        break;
                    }
                }
            }
            if torn {
                eprintln!(
                    "warn: truncating torn tail of {} after {good_bytes} bytes",
                    path.display()
                );
                let file = OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                file.set_len(good_bytes)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
            }
        }
        Ok(ResultStore { path, rows, keys })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has(&self, split: &str, model: &str, dataset: &str, spec: &str, user_id: &str) -> bool {
        self.keys.contains(&(
            split.to_string(),
            model.to_string(),
            dataset.to_string(),
            spec.to_string(),
            user_id.to_string(),
        ))
    }

    /// Append one row, skipping keys already present.
    pub fn append(&mut self, row: ResultRow) -> Result<bool> {
        if self.keys.contains(&row.key()) {
            return Ok(false);
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(self.path.display().to_string(), e))?;
        writeln!(file, "{}", serde_json::to_string(&row)?)
            .map_err(|e| Error::io(self.path.display().to_string(), e))?;
        self.keys.insert(row.key());
        self.rows.push(row);
        Ok(true)
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    /// User ids already completed for one (split, model, dataset, spec).
    pub fn completed_users(
        &self,
        split: &str,
        model: &str,
        dataset: &str,
        spec: &str,
    ) -> HashSet<&str> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.model == model && r.dataset == dataset && r.spec == spec)
            .map(|r| r.user_id.as_str())
            .collect()
    }

    /// Rebuild the (dataset, spec) grid for one split and model.
    pub fn grid(&self, split: &str, model: &str) -> Result<ResultGrid> {
        let mut by_key: std::collections::BTreeMap<(String, PromptSpec), Vec<EvalResult>> =
            std::collections::BTreeMap::new();
        for row in &self.rows {
            if row.split != split || row.model != model {
                continue;
            }
            let spec: PromptSpec = row.spec.parse()?;
            by_key
                .entry((row.dataset.clone(), spec))
                .or_default()
                .push(row.to_eval()?);
        }
        let mut grid = ResultGrid::new();
        for ((dataset, spec), results) in by_key {
            grid.insert(PromptResult::from_results(&dataset, spec, results, None));
        }
        Ok(grid)
    }

    /// Deterministic summary.csv content over all rows.
    pub fn summary_csv(&self) -> Result<String> {
        let mut lines = vec!["split,model,dataset,spec,n_users,mean_ndcg,failures,fallbacks".to_string()];
        let mut splits: Vec<(String, String)> = self
            .rows
            .iter()
            .map(|r| (r.split.clone(), r.model.clone()))
            .collect();
        splits.sort();
        splits.dedup();
        for (split, model) in splits {
            let grid = self.grid(&split, &model)?;
            for result in grid.iter() {
                lines.push(format!(
                    "{split},{model},{},{},{},{:.6},{},{}",
                    result.dataset,
                    result.spec.name(),
                    result.results.len(),
                    result.mean_ndcg,
                    result.failures,
                    result.fallbacks,
                ));
            }
        }
        lines.push(String::new());
        Ok(lines.join("\n"))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.summary_csv()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(user: &str, ndcg: f64) -> ResultRow {
        ResultRow {
            dataset: "d".into(),
            spec: "R-10-T".into(),
            user_id: user.into(),
            ndcg,
            attempts: 1,
            fallback: false,
            split: "validation".into(),
            model: "mock".into(),
        }
    }

    #[test]
    fn append_skips_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let mut store = ResultStore::open(&path).unwrap();
        assert!(store.append(row("u1", 0.5)).unwrap());
        assert!(!store.append(row("u1", 0.9)).unwrap());
        assert!(store.append(row("u2", 1.0)).unwrap());
        assert_eq!(store.len(), 2);

        let reloaded = ResultStore::open(&path).unwrap();
        assert_eq!(reloaded.len(), 2);
        assert!(reloaded.has("validation", "mock", "d", "R-10-T", "u1"));
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        {
            let mut store = ResultStore::open(&path).unwrap();
            store.append(row("u1", 0.5)).unwrap();
        }
        {
            let mut file = OpenOptions::new().append(true).open(&path).unwrap();
            write!(file, "{{\"dataset\":\"d\",\"spec\":").unwrap();
        }
        let mut store = ResultStore::open(&path).unwrap();
        assert_eq!(store.len(), 1);
        assert!(store.append(row("u2", 1.0)).unwrap());
        let reloaded = ResultStore::open(&path).unwrap();
        assert_eq!(reloaded.len(), 2);
    }

    #[test]
    fn grid_aggregates_means() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let mut store = ResultStore::open(&path).unwrap();
        store.append(row("u1", 0.5)).unwrap();
        store.append(row("u2", 1.0)).unwrap();
        let grid = store.grid("validation", "mock").unwrap();
        let result = grid.get_by_name("d", "R-10-T").unwrap();
        assert!((result.mean_ndcg - 0.75).abs() < 1e-12);
        assert_eq!(result.results.len(), 2);
    }

    #[test]
    fn summary_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let mut store = ResultStore::open(&path).unwrap();
        store.append(row("u2", 1.0)).unwrap();
        store.append(row("u1", 0.5)).unwrap();
        let a = store.summary_csv().unwrap();
        let b = ResultStore::open(&path).unwrap().summary_csv().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("validation,mock,d,R-10-T,2,0.750000,0,0"));
    }
}
