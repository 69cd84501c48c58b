//! Deterministic offline stand-ins for the chat and embedding endpoints.
//!
//! The mock oracle reads the prompts this harness renders. For an inference
//! prompt it scores every numbered candidate by lexical overlap with the
//! user-information block (shared lowercased tokens weighted by inverse
//! frequency over the candidate lines), adds seeded noise of amplitude
//! epsilon, and answers with the full ranking. For a summarization prompt it
//! answers with the highest-weight content tokens of the item list, so the
//! downstream inference prompt still carries the user's lexical signal.
//!
//! A failure-injection knob makes the first `fail_first` ranking attempts
//! return unparseable text (summaries have no parse step, so injection does
//! not apply to them). The oracle is a pure function of
//! (prompt, seed, epsilon, fail_first, attempt).

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::hashing::{seed_from_parts, sha256_hex};
use crate::promptgrid::{is_summarization_prompt, Embedder, CANDIDATES_HEADER, USER_BLOCK_HEADER};

#[derive(Debug, Clone)]
pub struct MockOracle {
    pub seed: u64,
    /// Amplitude of the uniform noise added to each candidate's score.
    pub epsilon: f64,
    /// The first `fail_first` ranking attempts return unparseable text.
    pub fail_first: u32,
}

impl MockOracle {
    pub fn new(seed: u64, epsilon: f64, fail_first: u32) -> Self {
        MockOracle {
            seed,
            epsilon,
            fail_first,
        }
    }

    pub fn complete(&self, prompt: &str, attempt: u32) -> Result<String> {
        if is_summarization_prompt(prompt) {
            self.complete_summary(prompt)
        } else if prompt.contains(CANDIDATES_HEADER) {
            self.complete_inference(prompt, attempt)
        } else {
            Err(Error::UnrecognizedPrompt)
        }
    }

    fn complete_inference(&self, prompt: &str, attempt: u32) -> Result<String> {
        let candidates = candidate_lines(prompt)?;
        if attempt <= self.fail_first {
            // Deliberately bracket-free so the ranking parser rejects it.
            return Ok(format!(
                "I am sorry, I cannot produce a ranking right now. attempt {attempt}"
            ));
        }
        let user_block = user_block(prompt)?;
        let user_tokens: HashSet<String> = tokens(&user_block).into_iter().collect();

        // Inverse frequency over the candidate lines: a token shared with
        // every candidate carries almost no signal.
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let tokenized: Vec<HashSet<String>> = candidates
            .iter()
            .map(|line| tokens(line).into_iter().collect::<HashSet<_>>())
            .collect();
        for toks in &tokenized {
            for t in toks {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
        }

        let mut rng = StdRng::seed_from_u64(seed_from_parts(&[
            "mock-noise",
            &self.seed.to_string(),
            &sha256_hex(prompt),
        ]));
        let mut scored: Vec<(usize, f64)> = tokenized
            .iter()
            .enumerate()
            .map(|(i, toks)| {
                let overlap: f64 = toks
                    .iter()
                    .filter(|t| user_tokens.contains(*t))
                    .map(|t| 1.0 / doc_freq[t] as f64)
                    .sum();
                let noise = if self.epsilon > 0.0 {
                    rng.random_range(-self.epsilon..=self.epsilon)
                } else {
                    // Keep the stream position stable across epsilon values.
                    let _: f64 = rng.random();
                    0.0
                };
                (i, overlap + noise)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let ranking: Vec<String> = scored.iter().map(|(i, _)| (i + 1).to_string()).collect();
        Ok(format!("[{}]", ranking.join(",")))
    }

    fn complete_summary(&self, prompt: &str) -> Result<String> {
        let item_lines: Vec<&str> = prompt
            .lines()
            .filter(|l| l.trim_start().starts_with("- "))
            .collect();
        if item_lines.is_empty() {
            return Err(Error::UnrecognizedPrompt);
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for line in &item_lines {
            for t in tokens(line) {
                if is_content_token(&t) {
                    *counts.entry(t).or_insert(0) += 1;
                }
            }
        }
        let mut weighted: Vec<(String, usize)> = counts.into_iter().collect();
        weighted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let top: Vec<String> = weighted.into_iter().take(25).map(|(t, _)| t).collect();
        Ok(format!(
            "The user gravitates toward items involving {}.",
            top.join(" ")
        ))
    }
}

/// Lowercased alphanumeric tokens.
fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Content tokens for summaries: drop the rendering labels, bare numbers,
/// and one/two-letter fragments.
fn is_content_token(t: &str) -> bool {
    t.len() >= 3
        && !t.chars().all(|c| c.is_ascii_digit())
        && !matches!(t, "title" | "category" | "description" | "none")
}

fn user_block(prompt: &str) -> Result<String> {
    let start = prompt
        .find(USER_BLOCK_HEADER)
        .ok_or(Error::UnrecognizedPrompt)?
        + USER_BLOCK_HEADER.len();
    let end = prompt.find(CANDIDATES_HEADER).ok_or(Error::UnrecognizedPrompt)?;
    if end <= start {
        return Err(Error::UnrecognizedPrompt);
    }
    Ok(prompt[start..end].trim().to_string())
}

/// The numbered candidate lines, in order.
fn candidate_lines(prompt: &str) -> Result<Vec<String>> {
    let after = prompt
        .find(CANDIDATES_HEADER)
        .ok_or(Error::UnrecognizedPrompt)?
        + CANDIDATES_HEADER.len();
    let mut lines = Vec::new();
    for line in prompt[after..].lines() {
        let trimmed = line.trim();
        if let Some((number, rest)) = trimmed.split_once(". ") {
            if number.parse::<u32>().is_ok() {
                lines.push(rest.to_string());
                continue;
            }
        }
        if !lines.is_empty() {
            break;
        }
    }
    if lines.is_empty() {
        return Err(Error::UnrecognizedPrompt);
    }
    Ok(lines)
}

/// Embedding stand-in: the vector is a seeded hash of the text, stable
/// across runs. Identical texts embed identically.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        MockEmbedder { seed, dim }
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut rng = StdRng::seed_from_u64(seed_from_parts(&[
                    "mock-embed",
                    &self.seed.to_string(),
                    text,
                ]));
                (0..self.dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptgrid::{PromptRenderer, PromptSpec, PromptTemplates, SampleFormat};
    use crate::promptgrid::AttrCombo;
    use crate::catalog::{Catalog, EvalInstance, Item, UserHistory};

    fn build_prompt(user_block: &str, candidate_titles: &[&str]) -> String {
        let mut catalog = Catalog::new();
        for (i, t) in candidate_titles.iter().enumerate() {
            catalog.insert(Item {
                item_id: format!("c{i}"),
                title: t.to_string(),
                categories: vec![],
                description: String::new(),
            });
        }
        let inst = EvalInstance {
            user_id: "u0".into(),
            candidates: (0..candidate_titles.len()).map(|i| format!("c{i}")).collect(),
            positive_mask: (0..candidate_titles.len()).map(|i| i < 2).collect(),
            history: UserHistory {
                user_id: "u0".into(),
                events: vec![],
            },
            candidate_seed: 0,
        };
        let templates = PromptTemplates::builtin();
        let renderer = PromptRenderer::new(&templates, "music", 1 << 20);
        renderer
            .inference_prompt(
                &inst,
                &PromptSpec::sampling(SampleFormat::Random, 10, AttrCombo::T),
                user_block,
                &catalog,
            )
            .unwrap()
            .text
    }

    #[test]
    fn verbatim_titles_rank_first() {
        let mut titles: Vec<String> = vec![
            "crimson harvest moon".to_string(),
            "velvet thunder road".to_string(),
        ];
        for i in 0..18 {
            titles.push(format!("unrelated filler opus number{i}"));
        }
        let title_refs: Vec<&str> = titles.iter().map(|s| s.as_str()).collect();
        let user_block =
            "- title: crimson harvest moon\n- title: velvet thunder road\n- title: quiet rivers";
        let prompt = build_prompt(user_block, &title_refs);

        let oracle = MockOracle::new(7, 0.0, 0);
        let out = oracle.complete(&prompt, 1).unwrap();
        let body = out.trim_start_matches('[').split(']').next().unwrap();
        let order: Vec<usize> = body.split(',').map(|t| t.parse().unwrap()).collect();
        assert_eq!(order.len(), 20);
        let top2: HashSet<usize> = order[..2].iter().copied().collect();
        assert_eq!(top2, HashSet::from([1, 2]));
    }

    #[test]
    fn failure_injection_contract() {
        let prompt = build_prompt("- title: anything", &["a", "b", "c"]);
        let oracle = MockOracle::new(7, 0.0, 3);
        for attempt in 1..=3 {
            let out = oracle.complete(&prompt, attempt).unwrap();
            assert!(!out.contains('['), "attempt {attempt} must be unparseable");
        }
        let out = oracle.complete(&prompt, 4).unwrap();
        assert!(out.starts_with('['));
    }

    #[test]
    fn oracle_is_pure() {
        let prompt = build_prompt("- title: x y z", &["x y", "q r", "s t"]);
        let oracle = MockOracle::new(9, 0.25, 0);
        assert_eq!(
            oracle.complete(&prompt, 1).unwrap(),
            oracle.complete(&prompt, 1).unwrap()
        );
    }

    #[test]
    fn summary_carries_item_tokens() {
        let templates = PromptTemplates::builtin();
        let renderer = PromptRenderer::new(&templates, "music", 1 << 20);
        let items: Vec<Item> = (0..5)
            .map(|i| Item {
                item_id: format!("i{i}"),
                title: format!("glacier anthem vol{i}"),
                categories: vec!["synthwave".into()],
                description: String::new(),
            })
            .collect();
        let refs: Vec<&Item> = items.iter().collect();
        let spec = PromptSpec::summarizing(SampleFormat::Random, 30, AttrCombo::TC);
        let prompt = renderer.summarization_prompt(&refs, &spec, "u0").unwrap();

        let oracle = MockOracle::new(7, 0.0, 0);
        let summary = oracle.complete(&prompt.text, 1).unwrap();
        assert!(summary.contains("glacier"));
        assert!(summary.contains("synthwave"));
        assert!(!summary.contains('['));
    }

    #[test]
    fn unrecognized_prompt_is_an_error() {
        let oracle = MockOracle::new(7, 0.0, 0);
        assert!(matches!(
            oracle.complete("what is the weather", 1),
            Err(Error::UnrecognizedPrompt)
        ));
    }

    #[test]
    fn mock_embedder_is_stable_and_text_keyed() {
        let embedder = MockEmbedder::new(3, 8);
        let a = embedder
            .embed(&["hello".to_string(), "hello".to_string(), "other".to_string()])
            .unwrap();
        assert_eq!(a[0], a[1]);
        assert_ne!(a[0], a[2]);
        let b = embedder.embed(&["hello".to_string()]).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(b[0].len(), 8);
    }
}
