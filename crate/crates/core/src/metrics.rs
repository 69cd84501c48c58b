//! Ranking parse, nDCG@10, the retry/fallback protocol, and per-prompt
//! aggregation.

use std::collections::{BTreeMap, HashSet};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, EvalInstance};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, GatewayEmbedder, ModelProfile};
use crate::hashing::seed_from_parts;
use crate::promptgrid::{
    sample_extract_k, sample_latest_k, sample_random_k, Approach, PromptRenderer, PromptSpec,
    SampleFormat,
};

/// A permutation of 1..=n candidate indices, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking(pub Vec<u32>);

/// Why a completion could not be scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReject {
    pub reason: String,
}

/// Extract a ranking from completion text.
///
/// Takes the last bracketed integer list in the text; accepts iff it holds at
/// least min(10, n) distinct indices, all within 1..=n (nDCG@10 is fully
/// determined by the top ten, so a full permutation is not required).
/// Later duplicates are dropped; any out-of-range index rejects the text.
/// Unlisted candidates are appended in seeded random order to complete the
/// permutation.
pub fn parse_ranking(
    text: &str,
    n_candidates: usize,
    completion_seed: u64,
) -> std::result::Result<Ranking, ParseReject> {
    let list = last_bracketed_int_list(text).ok_or_else(|| ParseReject {
        reason: "no bracketed integer list".into(),
    })?;

    let mut seen = HashSet::new();
    let mut ranking: Vec<u32> = Vec::new();
    for value in list {
        if value < 1 || value > n_candidates as i64 {
            return Err(ParseReject {
                reason: format!("index {value} outside 1..={n_candidates}"),
            });
        }
        let index = value as u32;
        if seen.insert(index) {
            ranking.push(index);
        }
    }
    let required = n_candidates.min(10);
    if ranking.len() < required {
        return Err(ParseReject {
            reason: format!("only {} distinct indices, need {required}", ranking.len()),
        });
    }

    let mut rest: Vec<u32> = (1..=n_candidates as u32)
        .filter(|i| !seen.contains(i))
        .collect();
    let mut rng = StdRng::seed_from_u64(completion_seed);
    rest.shuffle(&mut rng);
    ranking.extend(rest);
    Ok(Ranking(ranking))
}

/// Find the last `[...]` group consisting solely of integers, commas, and
/// whitespace. Models often restate the candidate list first; the answer is
/// conventionally last.
fn last_bracketed_int_list(text: &str) -> Option<Vec<i64>> {
    let bytes = text.as_bytes();
    let mut best: Option<Vec<i64>> = None;
    let mut start: Option<usize> = None;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'[' => start = Some(i + 1),
            b']' => {
                if let Some(s) = start.take() {
                    if let Some(values) = parse_int_list(&text[s..i]) {
                        best = Some(values);
                    }
                }
            }
            _ => {}
        }
    }
    best
}

fn parse_int_list(body: &str) -> Option<Vec<i64>> {
    let mut values = Vec::new();
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return None;
        }
        // Tolerate a trailing ellipsis as printed in format examples.
        if part == "..." {
            continue;
        }
        values.push(part.parse::<i64>().ok()?);
    }
    if values.is_empty() {
        None
    } else {
        Some(values)
    }
}

/// Binary-relevance nDCG truncated at `k`.
///
/// DCG@k = sum over ranks r <= k of rel(r) / log2(r + 1); IDCG@k is the same
/// sum with all positives placed first; returns DCG / IDCG.
pub fn ndcg_at_k(ranking: &Ranking, positive_mask: &[bool], k: usize) -> Result<f64> {
    if ranking.0.len() != positive_mask.len() {
        return Err(Error::Config(format!(
            "ranking has {} entries for {} candidates",
            ranking.0.len(),
            positive_mask.len()
        )));
    }
    let n_pos = positive_mask.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(Error::Config("nDCG undefined with zero positives".into()));
    }
    let k = k.min(ranking.0.len());
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();

    let mut dcg = 0.0;
    for (i, &candidate) in ranking.0[..k].iter().enumerate() {
        if positive_mask[(candidate - 1) as usize] {
            dcg += discount(i + 1);
        }
    }
    let idcg: f64 = (1..=n_pos.min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

/// One user's outcome for one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub user_id: String,
    pub spec: PromptSpec,
    pub ndcg: f64,
    pub attempts_used: u32,
    pub fell_back_random: bool,
}

/// Aggregated accuracy of one spec on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptResult {
    pub dataset: String,
    pub spec: PromptSpec,
    pub mean_ndcg: f64,
    pub results: Vec<EvalResult>,
    /// Attempts that did not yield an accepted ranking.
    pub failures: u64,
    pub fallbacks: u64,
    /// Mean estimated prompt tokens; absent for grids reloaded from disk.
    pub mean_prompt_tokens: Option<f64>,
}

impl PromptResult {
    /// Aggregate per-user results (sorted by user_id, so the value is
    /// independent of evaluation order).
    pub fn from_results(
        dataset: &str,
        spec: PromptSpec,
        mut results: Vec<EvalResult>,
        mean_prompt_tokens: Option<f64>,
    ) -> Self {
        results.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        let mean_ndcg = if results.is_empty() {
            0.0
        } else {
            results.iter().map(|r| r.ndcg).sum::<f64>() / results.len() as f64
        };
        let fallbacks = results.iter().filter(|r| r.fell_back_random).count() as u64;
        let failures = results
            .iter()
            .map(|r| {
                if r.fell_back_random {
                    r.attempts_used as u64
                } else {
                    (r.attempts_used - 1) as u64
                }
            })
            .sum();
        PromptResult {
            dataset: dataset.to_string(),
            spec,
            mean_ndcg,
            results,
            failures,
            fallbacks,
            mean_prompt_tokens,
        }
    }

    /// Summary-only entry (fixture tables, reloaded summaries).
    pub fn summary(dataset: &str, spec: PromptSpec, mean_ndcg: f64) -> Self {
        PromptResult {
            dataset: dataset.to_string(),
            spec,
            mean_ndcg,
            results: Vec::new(),
            failures: 0,
            fallbacks: 0,
            mean_prompt_tokens: None,
        }
    }
}

/// The (dataset, spec) accuracy matrix feeding selection.
#[derive(Debug, Clone, Default)]
pub struct ResultGrid {
    entries: BTreeMap<(String, String), PromptResult>,
}

impl ResultGrid {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace; the grid holds at most one entry per key.
    pub fn insert(&mut self, result: PromptResult) {
        self.entries
            .insert((result.dataset.clone(), result.spec.name()), result);
    }

    pub fn get(&self, dataset: &str, spec: &PromptSpec) -> Option<&PromptResult> {
        self.entries.get(&(dataset.to_string(), spec.name()))
    }

    pub fn get_by_name(&self, dataset: &str, spec_name: &str) -> Option<&PromptResult> {
        self.entries.get(&(dataset.to_string(), spec_name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn datasets(&self) -> Vec<String> {
        let mut out: Vec<String> = self.entries.keys().map(|(d, _)| d.clone()).collect();
        out.dedup();
        out
    }

    pub fn results_for<'a>(&'a self, dataset: &str) -> impl Iterator<Item = &'a PromptResult> + 'a {
        let dataset = dataset.to_string();
        self.entries
            .iter()
            .filter(move |((d, _), _)| *d == dataset)
            .map(|(_, r)| r)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptResult> {
        self.entries.values()
    }
}

/// Everything evaluate_prompt needs besides the instances themselves.
pub struct EvalSetup<'a> {
    pub gateway: &'a Gateway,
    pub chat_profile: &'a ModelProfile,
    pub embed_profile: &'a ModelProfile,
    pub catalog: &'a Catalog,
    pub renderer: PromptRenderer<'a>,
    pub run_seed: u64,
    pub max_attempts: u32,
    pub ndcg_k: usize,
}

/// Evaluate one spec over instances with the retry/fallback protocol.
///
/// Per user: build the user block (running the summarization call first for
/// summarizing specs), then send the inference prompt with attempt indices
/// 1..=max_attempts until a ranking parses. Exhaustion scores a seeded
/// uniform-random permutation with `fell_back_random = true`; a context
/// overflow falls back the same way without issuing calls.
///
/// `on_result` sees each result as it lands (streamed to results.jsonl by the
/// run loop); an error from it aborts cleanly. Pass `&mut |_| Ok(())` when no
/// streaming is needed.
pub fn evaluate_prompt(
    setup: &EvalSetup,
    dataset: &str,
    spec: &PromptSpec,
    instances: &[EvalInstance],
    on_result: &mut dyn FnMut(&EvalResult) -> Result<()>,
) -> Result<PromptResult> {
    let mut results = Vec::with_capacity(instances.len());
    let mut token_sum = 0.0;
    let mut token_count = 0usize;

    for instance in instances {
        let result = evaluate_user(setup, dataset, spec, instance, &mut token_sum, &mut token_count)?;
        on_result(&result)?;
        results.push(result);
    }

    let mean_tokens = if token_count > 0 {
        Some(token_sum / token_count as f64)
    } else {
        None
    };
    Ok(PromptResult::from_results(dataset, *spec, results, mean_tokens))
}

fn fallback_result(setup: &EvalSetup, spec: &PromptSpec, instance: &EvalInstance) -> Result<EvalResult> {
    let seed = seed_from_parts(&[
        "fallback",
        &setup.run_seed.to_string(),
        &instance.user_id,
        &spec.name(),
    ]);
    let mut permutation: Vec<u32> = (1..=instance.n_candidates() as u32).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    permutation.shuffle(&mut rng);
    let ndcg = ndcg_at_k(&Ranking(permutation), &instance.positive_mask, setup.ndcg_k)?;
    Ok(EvalResult {
        user_id: instance.user_id.clone(),
        spec: *spec,
        ndcg,
        attempts_used: setup.max_attempts,
        fell_back_random: true,
    })
}

fn evaluate_user(
    setup: &EvalSetup,
    dataset: &str,
    spec: &PromptSpec,
    instance: &EvalInstance,
    token_sum: &mut f64,
    token_count: &mut usize,
) -> Result<EvalResult> {
    // Sample the user block items once; they do not vary across attempts.
    let sample_seed = seed_from_parts(&[
        "sample",
        &setup.run_seed.to_string(),
        &instance.user_id,
        &spec.name(),
    ]);
    let sampled_ids: Vec<&str> = match spec.format {
        SampleFormat::Latest => sample_latest_k(&instance.history, spec.k),
        SampleFormat::Random => sample_random_k(&instance.history, spec.k, sample_seed),
        SampleFormat::Extract => {
            let embedder = GatewayEmbedder {
                gateway: setup.gateway,
                profile: setup.embed_profile,
            };
            sample_extract_k(
                &instance.history,
                &instance.candidates,
                setup.catalog,
                spec.attrs,
                &embedder,
                spec.k,
            )?
        }
    };
    let sampled_items: Vec<&crate::catalog::Item> = sampled_ids
        .iter()
        .map(|id| {
            setup
                .catalog
                .get(id)
                .ok_or_else(|| Error::Config(format!("item {id} not in catalog")))
        })
        .collect::<Result<_>>()?;

    let mut summary: Option<String> = None;
    let mut rejected_records: Vec<usize> = Vec::new();

    for attempt in 1..=setup.max_attempts {
        // Summarizing specs run the summarization call first; its transport
        // failures consume protocol attempts like any other.
        if spec.approach == Approach::Summarizing && summary.is_none() {
            let prompt = match setup
                .renderer
                .summarization_prompt(&sampled_items, spec, &instance.user_id)
            {
                Ok(p) => p,
                Err(Error::ContextOverflow { .. }) => {
                    return fallback_result(setup, spec, instance);
                }
                Err(e) => return Err(e),
            };
            match setup
                .gateway
                .chat_complete(setup.chat_profile, &prompt, attempt, dataset)
            {
                Ok((text, _)) => summary = Some(text),
                Err(Error::Transport(_)) => continue,
                Err(Error::ContextOverflow { .. }) => {
                    return fallback_result(setup, spec, instance);
                }
                Err(e) => return Err(e),
            }
        }

        let user_block = match spec.approach {
            Approach::Sampling => setup.renderer.item_block(&sampled_items, spec.attrs),
            Approach::Summarizing => summary.clone().expect("summary set above"),
        };
        let prompt = match setup
            .renderer
            .inference_prompt(instance, spec, &user_block, setup.catalog)
        {
            Ok(p) => p,
            Err(Error::ContextOverflow { .. }) => {
                return fallback_result(setup, spec, instance);
            }
            Err(e) => return Err(e),
        };
        *token_sum += prompt.estimated_tokens as f64;
        *token_count += 1;

        let (text, record_idx) = match setup
            .gateway
            .chat_complete(setup.chat_profile, &prompt, attempt, dataset)
        {
            Ok(out) => out,
            Err(Error::Transport(_)) => continue,
            Err(Error::ContextOverflow { .. }) => {
                return fallback_result(setup, spec, instance);
            }
            Err(e) => return Err(e),
        };

        let completion_seed = seed_from_parts(&[
            "complete",
            &setup.run_seed.to_string(),
            &instance.user_id,
            &spec.name(),
            &attempt.to_string(),
        ]);
        match parse_ranking(&text, instance.n_candidates(), completion_seed) {
            Ok(ranking) => {
                for idx in rejected_records.drain(..) {
                    setup.gateway.record_parse_reject(idx);
                }
                let ndcg = ndcg_at_k(&ranking, &instance.positive_mask, setup.ndcg_k)?;
                return Ok(EvalResult {
                    user_id: instance.user_id.clone(),
                    spec: *spec,
                    ndcg,
                    attempts_used: attempt,
                    fell_back_random: false,
                });
            }
            Err(_) => {
                rejected_records.push(record_idx);
            }
        }
    }

    for idx in rejected_records {
        setup.gateway.record_parse_reject(idx);
    }
    fallback_result(setup, spec, instance)
}

/// Monte-Carlo mean and standard error of nDCG@k under uniform-random
/// rankings.
pub fn random_baseline_stats(
    n_pos: usize,
    n_cand: usize,
    k: usize,
    trials: u64,
    seed: u64,
) -> (f64, f64) {
    assert!(trials >= 1, "need at least one trial");
    assert!(n_pos >= 1 && n_pos <= n_cand);
    let mask: Vec<bool> = (0..n_cand).map(|i| i < n_pos).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut permutation: Vec<u32> = (1..=n_cand as u32).collect();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        permutation.shuffle(&mut rng);
        let value = ndcg_at_k(&Ranking(permutation.clone()), &mask, k).expect("valid instance");
        sum += value;
        sum_sq += value * value;
    }
    let mean = sum / trials as f64;
    let variance = (sum_sq / trials as f64 - mean * mean).max(0.0);
    let stderr = (variance / trials as f64).sqrt();
    (mean, stderr)
}

/// Monte-Carlo mean nDCG@k of uniform-random rankings.
pub fn random_baseline(n_pos: usize, n_cand: usize, k: usize, trials: u64, seed: u64) -> f64 {
    random_baseline_stats(n_pos, n_cand, k, trials, seed).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking_of(v: &[u32]) -> Ranking {
        Ranking(v.to_vec())
    }

    fn mask(n: usize, positives: &[usize]) -> Vec<bool> {
        (0..n).map(|i| positives.contains(&(i + 1))).collect()
    }

    #[test]
    fn parse_accepts_full_permutation() {
        let text = "[10,8,17,3,1,2,4,5,6,7,9,11,12,13,14,15,16,18,19,20]";
        let ranking = parse_ranking(text, 20, 0).unwrap();
        assert_eq!(ranking.0[..4], [10, 8, 17, 3]);
        let mut sorted = ranking.0.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (1..=20).collect::<Vec<u32>>());
    }

    #[test]
    fn parse_rejects_out_of_range() {
        let text = "Here you go: [21,1,2,3,4,5,6,7,8,9,10]";
        assert!(parse_ranking(text, 20, 0).is_err());
    }

    #[test]
    fn parse_rejects_short_lists() {
        assert!(parse_ranking("[1,2,3]", 20, 0).is_err());
    }

    #[test]
    fn parse_takes_the_last_list_and_completes_it() {
        let text = "candidates were [1,2,3] ... my answer: [5,4,3,2,1,6,7,8,9,10]";
        let ranking = parse_ranking(text, 12, 99).unwrap();
        assert_eq!(ranking.0[..10], [5, 4, 3, 2, 1, 6, 7, 8, 9, 10]);
        let tail: HashSet<u32> = ranking.0[10..].iter().copied().collect();
        assert_eq!(tail, HashSet::from([11, 12]));
    }

    #[test]
    fn parse_drops_later_duplicates() {
        let text = "[1,2,3,2,4,5,6,7,8,9,10,1,11]";
        let ranking = parse_ranking(text, 11, 0).unwrap();
        assert_eq!(ranking.0, vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn parse_without_list_rejects() {
        assert!(parse_ranking("no list here", 20, 0).is_err());
        assert!(parse_ranking("[not, numbers]", 20, 0).is_err());
    }

    #[test]
    fn parse_small_candidate_sets_need_all_indices() {
        assert!(parse_ranking("[1,2]", 3, 0).is_err());
        assert!(parse_ranking("[3,1,2]", 3, 0).is_ok());
    }

    #[test]
    fn ndcg_worked_examples() {
        // 2 positives at ranks 1,2 of 20.
        let ideal: Vec<u32> = (1..=20).collect();
        assert!((ndcg_at_k(&ranking_of(&ideal), &mask(20, &[1, 2]), 10).unwrap() - 1.0).abs() < 1e-12);

        // 2 positives at ranks 11,12: outside the top 10.
        assert_eq!(
            ndcg_at_k(&ranking_of(&ideal), &mask(20, &[11, 12]), 10).unwrap(),
            0.0
        );

        // 2 positives at ranks 1,3: (1 + 1/log2(4)) / (1 + 1/log2(3)).
        let got = ndcg_at_k(&ranking_of(&ideal), &mask(20, &[1, 3]), 10).unwrap();
        assert!((got - 0.91972).abs() < 1e-5, "got {got}");
    }

    #[test]
    fn ndcg_needs_a_positive() {
        let ideal: Vec<u32> = (1..=5).collect();
        assert!(ndcg_at_k(&ranking_of(&ideal), &mask(5, &[]), 3).is_err());
    }

    #[test]
    fn random_baseline_analytic_value() {
        // E[nDCG@10] = (n_pos/n) * sum_{r=1..10} 1/log2(r+1) / IDCG ~ 0.27859.
        let mean = random_baseline(2, 20, 10, 50_000, 13);
        assert!((mean - 0.2786).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn random_baseline_degenerate_cases() {
        assert_eq!(random_baseline(20, 20, 10, 100, 1), 1.0);
        let two = random_baseline(1, 2, 5, 200_000, 5);
        let expected = (1.0 + 1.0 / 3f64.log2()) / 2.0;
        assert!((two - expected).abs() < 0.005, "got {two}, want {expected}");
    }

    #[test]
    fn prompt_result_aggregation_is_order_independent() {
        let spec: PromptSpec = "R-10-T".parse().unwrap();
        let r = |user: &str, ndcg: f64| EvalResult {
            user_id: user.into(),
            spec,
            ndcg,
            attempts_used: 1,
            fell_back_random: false,
        };
        let a = PromptResult::from_results("d", spec, vec![r("u1", 0.5), r("u2", 1.0)], None);
        let b = PromptResult::from_results("d", spec, vec![r("u2", 1.0), r("u1", 0.5)], None);
        assert_eq!(a, b);
        assert!((a.mean_ndcg - 0.75).abs() < 1e-12);
    }
}
