//! Shared scaffolding for the integration suites: mock profiles, synthetic
//! corpora, and a small grid-evaluation driver.

#![allow(dead_code)]

use std::collections::BTreeMap;

use recprompt::catalog::{build_eval_split, partition_pools, Catalog, EvalInstance};
use recprompt::gateway::{Gateway, MockEmbedder, MockOracle, ModelKind, ModelProfile};
use recprompt::metrics::{evaluate_prompt, EvalSetup, ResultGrid};
use recprompt::promptgrid::{enumerate_grid, GridConfig, PromptRenderer, PromptSpec, PromptTemplates};
use recprompt::synth::{generate, SynthConfig};

pub fn chat_profile(name: &str) -> ModelProfile {
    ModelProfile {
        name: name.to_string(),
        endpoint_base: String::new(),
        kind: ModelKind::Chat,
        temperature: 0.3,
        price_in: 0.15,
        price_out: 0.60,
        context_limit: 16_384,
        requests_per_minute: 1_000_000,
    }
}

pub fn embed_profile() -> ModelProfile {
    ModelProfile {
        name: "mock-embed".to_string(),
        endpoint_base: String::new(),
        kind: ModelKind::Embedding,
        temperature: 0.0,
        price_in: 0.0,
        price_out: 0.0,
        context_limit: 8_192,
        requests_per_minute: 1_000_000,
    }
}

pub fn mock_gateway(oracle_seed: u64, epsilon: f64, fail_first: u32) -> Gateway {
    Gateway::mock(
        MockOracle::new(oracle_seed, epsilon, fail_first),
        MockEmbedder::new(oracle_seed, 24),
        None,
    )
}

pub struct Corpus {
    pub catalog: Catalog,
    pub validation: Vec<EvalInstance>,
    pub test: Vec<EvalInstance>,
}

/// Synthetic corpus split into disjoint validation/test instance sets.
pub fn corpus(seed: u64, n_users: usize, per_split: usize) -> Corpus {
    let data = generate(&SynthConfig {
        seed,
        n_users,
        events_min: 36,
        events_max: 46,
        ..SynthConfig::default()
    });
    let (catalog, histories) = data.ingest(3.0, 30);
    let (val_pool, test_pool) =
        partition_pools(&histories, per_split, per_split, 2, seed).expect("enough users");
    let validation =
        build_eval_split(&val_pool, &catalog, per_split, 2, 18, seed * 2 + 1).expect("val split");
    let test =
        build_eval_split(&test_pool, &catalog, per_split, 2, 18, seed * 2 + 2).expect("test split");
    Corpus {
        catalog,
        validation,
        test,
    }
}

pub struct MockHarness<'a> {
    pub gateway: &'a Gateway,
    pub chat: ModelProfile,
    pub embed: ModelProfile,
    pub templates: &'a PromptTemplates,
    pub run_seed: u64,
}

impl<'a> MockHarness<'a> {
    pub fn setup<'b>(&'b self, catalog: &'b Catalog) -> EvalSetup<'b> {
        EvalSetup {
            gateway: self.gateway,
            chat_profile: &self.chat,
            embed_profile: &self.embed,
            catalog,
            renderer: PromptRenderer::new(self.templates, "music", 16_384),
            run_seed: self.run_seed,
            max_attempts: 10,
            ndcg_k: 10,
        }
    }

    /// Evaluate every spec over the instances into a grid.
    pub fn eval_grid(
        &self,
        dataset: &str,
        catalog: &Catalog,
        specs: &[PromptSpec],
        instances: &[EvalInstance],
    ) -> ResultGrid {
        let setup = self.setup(catalog);
        let mut grid = ResultGrid::new();
        for spec in specs {
            let result = evaluate_prompt(&setup, dataset, spec, instances, &mut |_| Ok(()))
                .expect("mock evaluation");
            grid.insert(result);
        }
        grid
    }
}

pub fn default_specs() -> Vec<PromptSpec> {
    enumerate_grid(&GridConfig::default()).expect("default grid")
}

/// All-30 summary sizes matching the published tables' label convention.
pub fn all30_summary_sizes() -> BTreeMap<recprompt::promptgrid::AttrCombo, u32> {
    recprompt::promptgrid::AttrCombo::ALL
        .into_iter()
        .map(|a| (a, 30))
        .collect()
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}
