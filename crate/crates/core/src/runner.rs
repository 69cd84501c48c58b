//! Pipeline orchestration behind the CLI: ingest, stats, grid runs with
//! resume and budget control, RPI reports, and selection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use crate::catalog::{
    build_eval_split, compute_stats, ingest_reviews, partition_pools, Catalog, DatasetStats,
    EvalInstance, UserHistory,
};
use crate::config::{DatasetConfig, LoadedConfig, ModelConfig, ProviderConfig};
use crate::error::{Error, Result};
use crate::gateway::{
    load_ledger, ChatBackend, EmbedBackend, Gateway, HttpClient, MockEmbedder, MockOracle,
    ModelKind, ResponseCache,
};
use crate::hashing::seed_from_parts;
use crate::manifest::{DirLock, RunManifest};
use crate::metrics::{evaluate_prompt, EvalSetup, ResultGrid};
use crate::promptgrid::{enumerate_grid, PromptRenderer, PromptSpec, PromptTemplates};
use crate::report;
use crate::results::{ResultRow, ResultStore};
use crate::selector::{
    self, rpi_analysis, select_gs, select_rpi, select_two_tier, RpiMode, SelectionOutcome,
    Strategy,
};
use crate::tokenize::TokenEstimator;

/// `*`-wildcard match used by the --specs filter.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0usize, 0usize);
    let (mut star, mut mark) = (None::<usize>, 0usize);
    while ti < t.len() {
        if pi < p.len() && (p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some(pi);
            mark = ti;
            pi += 1;
        } else if let Some(s) = star {
            pi = s + 1;
            mark += 1;
            ti = mark;
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

/// A locked, manifest-checked output directory with its loaded config.
pub struct Workspace {
    pub loaded: LoadedConfig,
    pub out_dir: PathBuf,
    pub templates: PromptTemplates,
    pub manifest: RunManifest,
    _lock: DirLock,
}

pub struct IngestedDataset {
    pub catalog: Catalog,
    pub histories: Vec<UserHistory>,
    pub stats: DatasetStats,
}

impl Workspace {
    pub fn open(config_path: &Path) -> Result<Self> {
        let loaded = LoadedConfig::load(config_path)?;
        let out_dir = loaded.resolve(&loaded.config.run.out_dir);
        let lock = DirLock::acquire(&out_dir)?;
        let templates = match &loaded.config.run.template_file {
            Some(path) => PromptTemplates::load(&loaded.resolve(path))?,
            None => PromptTemplates::builtin(),
        };
        let grid = loaded.config.grid.to_grid_config()?;
        let specs = enumerate_grid(&grid)?.iter().map(|s| s.name()).collect();
        let manifest = RunManifest::load_or_create(
            &out_dir,
            &loaded.config_sha256,
            &templates.content_hash(),
            specs,
        )?;
        Ok(Workspace {
            loaded,
            out_dir,
            templates,
            manifest,
            _lock: lock,
        })
    }

    pub fn run_id(&self) -> String {
        self.manifest.run_id()
    }

    fn reports_dir(&self) -> Result<PathBuf> {
        let dir = self.out_dir.join("reports");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(dir)
    }

    fn dataset_configs(&self, filter: Option<&str>) -> Result<Vec<DatasetConfig>> {
        match filter {
            Some(name) => Ok(vec![self.loaded.dataset(name)?.clone()]),
            None => Ok(self.loaded.config.datasets.clone()),
        }
    }

    pub fn ingest_dataset(&self, dataset: &DatasetConfig) -> Result<IngestedDataset> {
        let reviews = self.loaded.resolve(&dataset.reviews);
        let catalog_path = self.loaded.resolve(&dataset.catalog);
        let (catalog, histories) = ingest_reviews(
            &reviews,
            &catalog_path,
            dataset.min_rating,
            dataset.min_count,
        )?;
        let stats = compute_stats(&catalog, &histories, TokenEstimator::Words)?;
        Ok(IngestedDataset {
            catalog,
            histories,
            stats,
        })
    }

    /// Ingest datasets, persist normalized artifacts, and mark the stage.
    pub fn cmd_ingest(&mut self, filter: Option<&str>) -> Result<Vec<(String, DatasetStats)>> {
        let mut out = Vec::new();
        for dataset in self.dataset_configs(filter)? {
            let ingested = self.ingest_dataset(&dataset)?;
            let dir = self.out_dir.join("ingest").join(&dataset.name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
            let mut items = String::new();
            for item in ingested.catalog.items() {
                items.push_str(&serde_json::to_string(item)?);
                items.push('\n');
            }
            std::fs::write(dir.join("items.jsonl"), items)
                .map_err(|e| Error::io(dir.display().to_string(), e))?;
            let mut users = String::new();
            for history in &ingested.histories {
                users.push_str(&serde_json::to_string(history)?);
                users.push('\n');
            }
            std::fs::write(dir.join("histories.jsonl"), users)
                .map_err(|e| Error::io(dir.display().to_string(), e))?;

            eprintln!(
                "ingested {}: {} items, {} users past filters",
                dataset.name,
                ingested.catalog.len(),
                ingested.histories.len()
            );
            self.manifest.mark_stage(&format!("ingest/{}", dataset.name), true);
            out.push((dataset.name.clone(), ingested.stats));
        }
        self.manifest.save(&self.out_dir)?;
        Ok(out)
    }

    /// Compute and write Table-1-style statistics.
    pub fn cmd_stats(&mut self, filter: Option<&str>) -> Result<String> {
        let mut rows = Vec::new();
        for dataset in self.dataset_configs(filter)? {
            let ingested = self.ingest_dataset(&dataset)?;
            rows.push((dataset.name.clone(), ingested.stats));
        }
        let csv = report::stats_csv(&rows);
        let md = report::stats_markdown(&rows, &self.run_id());
        let dir = self.reports_dir()?;
        std::fs::write(dir.join("stats.csv"), &csv)
            .map_err(|e| Error::io(dir.display().to_string(), e))?;
        std::fs::write(dir.join("stats.md"), &md)
            .map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(csv)
    }

    /// Build the evaluation instances of one split, deterministically.
    pub fn split_instances(
        &self,
        dataset: &DatasetConfig,
        ingested: &IngestedDataset,
        split: &str,
    ) -> Result<Vec<EvalInstance>> {
        let eval = &self.loaded.config.eval;
        let (validation_pool, test_pool) = partition_pools(
            &ingested.histories,
            dataset.n_validation_users,
            dataset.n_test_users,
            eval.n_pos,
            dataset.seed,
        )?;
        let pool = match split {
            "validation" => validation_pool,
            "test" => test_pool,
            other => return Err(Error::Usage(format!("unknown split `{other}`"))),
        };
        let split_seed = seed_from_parts(&["instances", &dataset.seed.to_string(), split]);
        build_eval_split(
            &pool,
            &ingested.catalog,
            pool.len(),
            eval.n_pos,
            eval.n_neg,
            split_seed,
        )
    }

    fn build_gateway(&self, chat_model: &ModelConfig) -> Result<Gateway> {
        let chat_backend = match &chat_model.provider {
            ProviderConfig::Openai { api_key_env, .. } => {
                let api_key = api_key_env
                    .as_ref()
                    .and_then(|var| std::env::var(var).ok());
                ChatBackend::Http {
                    client: HttpClient::new(),
                    api_key,
                }
            }
            ProviderConfig::Mock {
                oracle_seed,
                epsilon,
                fail_first,
                ..
            } => ChatBackend::Mock(MockOracle::new(*oracle_seed, *epsilon, *fail_first)),
            ProviderConfig::File { .. } => {
                return Err(Error::Config("chat profiles cannot use a file provider".into()))
            }
        };
        let embed_model = &self.loaded.config.models.embedding;
        let embed_backend = match &embed_model.provider {
            ProviderConfig::Openai { api_key_env, .. } => {
                let api_key = api_key_env
                    .as_ref()
                    .and_then(|var| std::env::var(var).ok());
                EmbedBackend::Http {
                    client: HttpClient::new(),
                    api_key,
                }
            }
            ProviderConfig::Mock {
                oracle_seed,
                embed_dim,
                ..
            } => EmbedBackend::Mock(MockEmbedder::new(*oracle_seed, *embed_dim)),
            ProviderConfig::File { path } => EmbedBackend::from_file(&self.loaded.resolve(path))?,
        };
        let cache = if self.loaded.config.run.cache {
            Some(ResponseCache::new(self.out_dir.join("cache"))?)
        } else {
            None
        };
        let gateway = Gateway::new(chat_backend, embed_backend, cache);

        // Budget accounting survives resumes: prior spend comes from the
        // ledger file.
        let ledger_path = self.ledger_path();
        if ledger_path.exists() {
            let prior: f64 = load_ledger(&ledger_path)?.iter().map(|r| r.cost_usd).sum();
            gateway.set_prior_usd(prior);
        }
        Ok(gateway)
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.out_dir.join("ledger.jsonl")
    }

    pub fn results_path(&self) -> PathBuf {
        self.out_dir.join("results.jsonl")
    }

    pub fn summary_path(&self) -> PathBuf {
        self.out_dir.join("summary.csv")
    }

    /// Evaluate the grid over one split with one model. Idempotent:
    /// completed (dataset, spec, user) rows are skipped on resume.
    ///
    /// `budget_override` replaces the config's budget cap for this invocation
    /// only (it is not part of the manifest hash, so a budget-stopped run can
    /// be resumed with a higher cap).
    pub fn cmd_run(
        &mut self,
        split: &str,
        model_slot: &str,
        specs_filter: Option<&str>,
        dataset_filter: Option<&str>,
        budget_override: Option<f64>,
    ) -> Result<()> {
        let model = self.loaded.model(model_slot)?.clone();
        let chat_profile = model.profile(ModelKind::Chat);
        chat_profile.validate()?;
        let embed_profile = self.loaded.config.models.embedding.profile(ModelKind::Embedding);
        let grid_config = self.loaded.config.grid.to_grid_config()?;
        let mut specs = enumerate_grid(&grid_config)?;
        if let Some(pattern) = specs_filter {
            specs.retain(|s| glob_match(pattern, &s.name()));
            if specs.is_empty() {
                return Err(Error::Usage(format!(
                    "--specs `{pattern}` matches no grid spec"
                )));
            }
        }

        let datasets = self.dataset_configs(dataset_filter)?;
        for dataset in &datasets {
            if !self.manifest.stage_done(&format!("ingest/{}", dataset.name)) {
                return Err(Error::StageIncomplete(format!("ingest/{}", dataset.name)));
            }
        }

        let gateway = self.build_gateway(&model)?;
        let store = Mutex::new(ResultStore::open(self.results_path())?);
        let budget = budget_override.or(self.loaded.config.run.budget_usd);
        let stop = AtomicBool::new(false);
        let run_seed = self.loaded.config.run.seed;
        let eval = self.loaded.config.eval.clone();
        let concurrency = self.loaded.config.run.concurrency.max(1);

        let mut run_error: Option<Error> = None;
        'datasets: for dataset in &datasets {
            let ingested = self.ingest_dataset(dataset)?;
            let instances = self.split_instances(dataset, &ingested, split)?;
            let renderer_genre = dataset.genre.clone();

            // Work queue: one entry per spec with its pending instances.
            let mut queue: Vec<(PromptSpec, Vec<EvalInstance>)> = Vec::new();
            {
                let store = store.lock().unwrap();
                for spec in &specs {
                    let done =
                        store.completed_users(split, model_slot, &dataset.name, &spec.name());
                    let pending: Vec<EvalInstance> = instances
                        .iter()
                        .filter(|i| !done.contains(i.user_id.as_str()))
                        .cloned()
                        .collect();
                    if !pending.is_empty() {
                        queue.push((*spec, pending));
                    }
                }
            }
            if queue.is_empty() {
                continue;
            }

            let queue = Mutex::new(queue);
            let errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());
            std::thread::scope(|scope| {
                for _ in 0..concurrency {
                    scope.spawn(|| loop {
                        if stop.load(Ordering::SeqCst) {
                            return;
                        }
                        let job = queue.lock().unwrap().pop();
                        let Some((spec, pending)) = job else { return };
                        let setup = EvalSetup {
                            gateway: &gateway,
                            chat_profile: &chat_profile,
                            embed_profile: &embed_profile,
                            catalog: &ingested.catalog,
                            renderer: PromptRenderer::new(
                                &self.templates,
                                &renderer_genre,
                                grid_config.context_limit.min(chat_profile.context_limit),
                            ),
                            run_seed,
                            max_attempts: eval.max_attempts,
                            ndcg_k: eval.ndcg_k,
                        };
                        let mut on_result = |result: &crate::metrics::EvalResult| -> Result<()> {
                            if stop.load(Ordering::SeqCst) {
                                return Err(Error::BudgetExceeded {
                                    spent: gateway.total_usd(),
                                    cap: budget.unwrap_or(f64::INFINITY),
                                });
                            }
                            let row = ResultRow::from_eval(result, &dataset.name, split, model_slot);
                            store.lock().unwrap().append(row)?;
                            if let Some(cap) = budget {
                                let spent = gateway.total_usd();
                                if spent >= cap {
                                    stop.store(true, Ordering::SeqCst);
                                    return Err(Error::BudgetExceeded { spent, cap });
                                }
                            }
                            Ok(())
                        };
                        if let Err(e) =
                            evaluate_prompt(&setup, &dataset.name, &spec, &pending, &mut on_result)
                        {
                            stop.store(true, Ordering::SeqCst);
                            errors.lock().unwrap().push(e);
                            return;
                        }
                    });
                }
            });

            gateway.flush_ledger(&self.ledger_path())?;
            let mut collected = errors.into_inner().unwrap();
            if let Some(e) = collected.drain(..).next() {
                run_error = Some(e);
                break 'datasets;
            }
            self.manifest.mark_stage(
                &format!("run/{}/{split}/{model_slot}", dataset.name),
                specs_filter.is_none(),
            );
        }

        store.lock().unwrap().write_summary(&self.summary_path())?;
        match run_error {
            Some(e) => {
                self.manifest.partial = true;
                self.manifest.save(&self.out_dir)?;
                Err(e)
            }
            None => {
                self.manifest.partial = false;
                self.manifest.save(&self.out_dir)?;
                Ok(())
            }
        }
    }

    fn grid_for(&self, split: &str, model_slot: &str) -> Result<ResultGrid> {
        let store = ResultStore::open(self.results_path())?;
        let grid = store.grid(split, model_slot)?;
        if grid.is_empty() {
            return Err(Error::StageIncomplete(format!(
                "run --split {split} --model {model_slot}"
            )));
        }
        Ok(grid)
    }

    /// RPI tables from stored results; writes CSV + markdown per approach.
    pub fn cmd_rpi(
        &mut self,
        split: &str,
        model_slot: &str,
        mode: RpiMode,
        dataset_filter: Option<&str>,
    ) -> Result<String> {
        use crate::promptgrid::Approach;
        let grid = self.grid_for(split, model_slot)?;
        let grid_config = self.loaded.config.grid.to_grid_config()?;
        let datasets = self.dataset_configs(dataset_filter)?;
        let dir = self.reports_dir()?;
        let mut rendered = String::new();
        for approach in [Approach::Sampling, Approach::Summarizing] {
            let mut tables = BTreeMap::new();
            for dataset in &datasets {
                tables.insert(
                    dataset.name.clone(),
                    rpi_analysis(&grid, &dataset.name, approach, mode)?,
                );
            }
            let csv = report::rpi_csv(&tables, Some(&grid), &grid_config.summary_sizes)?;
            let md = report::rpi_markdown(
                &tables,
                approach,
                Some(&grid),
                &grid_config.summary_sizes,
                &self.run_id(),
            )?;
            let base = format!("rpi_{split}_{model_slot}_{}", approach.name());
            std::fs::write(dir.join(format!("{base}.csv")), &csv)
                .map_err(|e| Error::io(dir.display().to_string(), e))?;
            std::fs::write(dir.join(format!("{base}.md")), &md)
                .map_err(|e| Error::io(dir.display().to_string(), e))?;
            rendered.push_str(&md);
        }
        Ok(rendered)
    }

    /// Run a selection strategy against the stored validation grid.
    pub fn cmd_select(
        &mut self,
        strategy: Strategy,
        model_slot: &str,
        mode: RpiMode,
        dataset_filter: Option<&str>,
    ) -> Result<Vec<(String, SelectionOutcome)>> {
        let grid_config = self.loaded.config.grid.to_grid_config()?;
        let datasets = self.dataset_configs(dataset_filter)?;
        let mut outcomes = Vec::new();

        match strategy {
            Strategy::Gs => {
                let grid = self.grid_for("validation", model_slot)?;
                for dataset in &datasets {
                    outcomes.push((dataset.name.clone(), select_gs(&grid, &dataset.name, None)?));
                }
            }
            Strategy::Rpi => {
                let grid = self.grid_for("validation", model_slot)?;
                for dataset in &datasets {
                    outcomes.push((
                        dataset.name.clone(),
                        select_rpi(&grid, &dataset.name, &grid_config.summary_sizes, mode)?,
                    ));
                }
            }
            Strategy::GsStar => {
                let cheap_grid = self.grid_for("validation", model_slot)?;
                let cheap_model = self.loaded.model(model_slot)?.clone();
                let expensive_model = self.loaded.config.models.expensive.clone();
                let expensive_profile = expensive_model.profile(ModelKind::Chat);
                let embed_profile =
                    self.loaded.config.models.embedding.profile(ModelKind::Embedding);
                let gateway = self.build_gateway(&expensive_model)?;
                let cheap_usd: f64 = if self.ledger_path().exists() {
                    load_ledger(&self.ledger_path())?
                        .iter()
                        .filter(|r| r.model == cheap_model.name)
                        .map(|r| r.cost_usd)
                        .sum()
                } else {
                    0.0
                };
                let store = Mutex::new(ResultStore::open(self.results_path())?);
                let run_seed = self.loaded.config.run.seed;
                let eval = self.loaded.config.eval.clone();

                for dataset in &datasets {
                    let ingested = self.ingest_dataset(dataset)?;
                    let instances = self.split_instances(dataset, &ingested, "validation")?;
                    let setup = EvalSetup {
                        gateway: &gateway,
                        chat_profile: &expensive_profile,
                        embed_profile: &embed_profile,
                        catalog: &ingested.catalog,
                        renderer: PromptRenderer::new(
                            &self.templates,
                            &dataset.genre,
                            grid_config.context_limit.min(expensive_profile.context_limit),
                        ),
                        run_seed,
                        max_attempts: eval.max_attempts,
                        ndcg_k: eval.ndcg_k,
                    };
                    let mut on_result = |result: &crate::metrics::EvalResult| -> Result<()> {
                        let row =
                            ResultRow::from_eval(result, &dataset.name, "validation", "expensive");
                        store.lock().unwrap().append(row)?;
                        Ok(())
                    };
                    let outcome = select_two_tier(
                        &cheap_grid,
                        &cheap_model.name,
                        &dataset.name,
                        &selector::default_baselines(),
                        &setup,
                        &instances,
                        &grid_config.summary_sizes,
                        mode,
                        cheap_usd,
                        Some(&mut on_result),
                    )?;
                    outcomes.push((dataset.name.clone(), outcome));
                }
                gateway.flush_ledger(&self.ledger_path())?;
                store.lock().unwrap().write_summary(&self.summary_path())?;
            }
        }

        // Persist outcome JSON + markdown.
        let dir = self.reports_dir()?;
        let slug = match strategy {
            Strategy::Gs => "gs",
            Strategy::Rpi => "rpi",
            Strategy::GsStar => "gs-star",
        };
        let json_path = dir.join(format!("selection_{slug}.json"));
        let payload: BTreeMap<&str, &SelectionOutcome> = outcomes
            .iter()
            .map(|(name, outcome)| (name.as_str(), outcome))
            .collect();
        std::fs::write(&json_path, serde_json::to_string_pretty(&payload)?)
            .map_err(|e| Error::io(json_path.display().to_string(), e))?;

        let dataset_names: Vec<String> = outcomes.iter().map(|(n, _)| n.clone()).collect();
        let mut cells: BTreeMap<String, (String, f64)> = BTreeMap::new();
        for (name, outcome) in &outcomes {
            cells.insert(name.clone(), (outcome.spec.name(), outcome.val_ndcg));
        }
        let rows = vec![(slug.to_uppercase(), cells)];
        let md = report::selection_markdown(&dataset_names, &rows, &outcomes, &self.run_id());
        let md_path = dir.join(format!("selection_{slug}.md"));
        std::fs::write(&md_path, md).map_err(|e| Error::io(md_path.display().to_string(), e))?;

        Ok(outcomes)
    }

    /// Aggregate the persisted ledger into cost.json / cost.md.
    pub fn cmd_cost(&mut self) -> Result<String> {
        let path = self.ledger_path();
        let records = if path.exists() {
            load_ledger(&path)?
        } else {
            Vec::new()
        };
        // Deterministic time base: the summed per-call latency.
        let wall: u64 = records.iter().map(|r| r.latency_ms).sum();
        let report_data = crate::gateway::cost_report(&records, wall);
        let md = report::cost_markdown(&report_data, &self.run_id());
        let dir = self.reports_dir()?;
        std::fs::write(dir.join("cost.json"), serde_json::to_string_pretty(&report_data)?)
            .map_err(|e| Error::io(dir.display().to_string(), e))?;
        std::fs::write(dir.join("cost.md"), &md)
            .map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(md)
    }

    /// Regenerate every report derivable from disk state.
    pub fn cmd_report(&mut self) -> Result<()> {
        let _ = self.cmd_stats(None)?;
        let store = ResultStore::open(self.results_path())?;
        if !store.is_empty() {
            store.write_summary(&self.summary_path())?;
            let mut combos: Vec<(String, String)> = store
                .rows()
                .iter()
                .map(|r| (r.split.clone(), r.model.clone()))
                .collect();
            combos.sort();
            combos.dedup();
            for (split, model_slot) in combos {
                // RPI tables need the complete factorial; partial runs are skipped.
                match self.cmd_rpi(&split, &model_slot, RpiMode::default(), None) {
                    Ok(_) => {}
                    Err(Error::IncompleteGrid(_)) | Err(Error::StageIncomplete(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
        self.cmd_cost()?;
        Ok(())
    }
}
