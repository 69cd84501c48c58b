//! The three item-sampling strategies: Latest-k, Random-k, Extract-k.
//!
//! All three return at most k distinct items ordered newest-first, so for
//! k >= |history| they are interchangeable.

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::catalog::{Catalog, UserHistory};
use crate::error::{Error, Result};
use crate::promptgrid::render::render_embedding_text;
use crate::promptgrid::AttrCombo;

/// Source of sentence-embedding vectors for Extract-k.
pub trait Embedder {
    /// One vector per input text, order-preserving, all the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// The min(k, n) most recent items, newest first.
pub fn sample_latest_k(history: &UserHistory, k: u32) -> Vec<&str> {
    let mut items = history.items_newest_first();
    items.truncate(k as usize);
    items
}

/// min(k, n) items drawn uniformly without replacement, then sorted
/// newest-first. `seed` should be derived from (run seed, user, spec) so the
/// stream is independent of every other spec's.
pub fn sample_random_k(history: &UserHistory, k: u32, seed: u64) -> Vec<&str> {
    let items = history.items_newest_first();
    let take = (k as usize).min(items.len());
    if take == items.len() {
        return items;
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, items.len(), take).into_iter().collect();
    // Ascending position in the newest-first list = newest first.
    chosen.sort_unstable();
    chosen.into_iter().map(|i| items[i]).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

/// Top-k history items by maximum cosine similarity to any candidate,
/// ties resolved toward the more recent item, output newest-first.
///
/// Texts are rendered per `attrs` ("{title}", "{category}", or
/// "{title}-{category}") and embedded in one batch: history items first,
/// then candidates.
pub fn sample_extract_k<'a>(
    history: &'a UserHistory,
    candidates: &[String],
    catalog: &Catalog,
    attrs: AttrCombo,
    embedder: &dyn Embedder,
    k: u32,
) -> Result<Vec<&'a str>> {
    let items = history.items_newest_first();
    let take = (k as usize).min(items.len());
    if take == items.len() {
        return Ok(items);
    }

    let mut texts = Vec::with_capacity(items.len() + candidates.len());
    let mut ids = Vec::with_capacity(items.len() + candidates.len());
    for id in items.iter().copied().chain(candidates.iter().map(String::as_str)) {
        let item = catalog
            .get(id)
            .ok_or_else(|| Error::Config(format!("item {id} not in catalog")))?;
        let et = render_embedding_text(item, attrs);
        texts.push(et.text);
        ids.push(et.item_id);
    }
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::Config(format!(
            "embedder returned {} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    let dim = vectors[0].len();
    for v in &vectors {
        if v.len() != dim {
            return Err(Error::EmbeddingDimension {
                expected: dim,
                got: v.len(),
            });
        }
    }

    let (history_vecs, candidate_vecs) = vectors.split_at(items.len());
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(items.len());
    for (pos, hv) in history_vecs.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for (cpos, cv) in candidate_vecs.iter().enumerate() {
            let sim = match cosine(hv, cv) {
                Some(s) => s,
                None => {
                    let id = if hv.iter().all(|x| *x == 0.0) {
                        ids[pos].clone()
                    } else {
                        ids[items.len() + cpos].clone()
                    };
                    return Err(Error::ZeroNormEmbedding(id));
                }
            };
            best = best.max(sim);
        }
        scored.push((pos, best));
    }

    // Highest similarity first; equal similarities fall back to recency
    // (smaller position in the newest-first list wins).
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut selected: Vec<usize> = scored[..take].iter().map(|(pos, _)| *pos).collect();
    selected.sort_unstable();
    Ok(selected.into_iter().map(|pos| items[pos]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Interaction, Item};

    fn history_of(ids_ts: &[(&str, i64, u64)]) -> UserHistory {
        let mut events: Vec<Interaction> = ids_ts
            .iter()
            .map(|(id, ts, seq)| Interaction {
                user_id: "u".into(),
                item_id: id.to_string(),
                timestamp: *ts,
                rating: 5.0,
                seq: *seq,
            })
            .collect();
        events.sort_by_key(|e| (e.timestamp, e.seq));
        UserHistory {
            user_id: "u".into(),
            events,
        }
    }

    struct FixedEmbedder(Vec<Vec<f64>>);
    impl Embedder for FixedEmbedder {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
            assert_eq!(texts.len(), self.0.len(), "unexpected batch size");
            Ok(self.0.clone())
        }
    }

    fn catalog_of(ids: &[&str]) -> Catalog {
        let mut c = Catalog::new();
        for id in ids {
            c.insert(Item {
                item_id: id.to_string(),
                title: format!("title {id}"),
                categories: vec![],
                description: String::new(),
            });
        }
        c
    }

    #[test]
    fn latest_k_definition() {
        let h = history_of(&[("A", 1, 1), ("B", 2, 2), ("C", 3, 3)]);
        assert_eq!(sample_latest_k(&h, 2), vec!["C", "B"]);
        assert_eq!(sample_latest_k(&h, 10), vec!["C", "B", "A"]);
    }

    #[test]
    fn latest_k_tie_breaks_by_input_order() {
        // B earlier in the file than C at the same timestamp: C is newer.
        let h = history_of(&[("A", 1, 1), ("B", 2, 2), ("C", 2, 3)]);
        assert_eq!(sample_latest_k(&h, 2), vec!["C", "B"]);
    }

    #[test]
    fn random_k_full_sample_equals_latest() {
        let h = history_of(&[("A", 1, 1), ("B", 2, 2), ("C", 3, 3)]);
        assert_eq!(sample_random_k(&h, 3, 42), sample_latest_k(&h, 3));
        assert_eq!(sample_random_k(&h, 9, 42), sample_latest_k(&h, 9));
    }

    #[test]
    fn random_k_is_deterministic() {
        let h = history_of(&[("A", 1, 1), ("B", 2, 2), ("C", 3, 3), ("D", 4, 4)]);
        assert_eq!(sample_random_k(&h, 2, 7), sample_random_k(&h, 2, 7));
    }

    #[test]
    fn random_k_draws_uniformly() {
        // 10,000 seeded draws of k=1 from 4 items: each frequency within
        // 3 sigma of 2500 (sigma = sqrt(10000 * 0.25 * 0.75) ~ 43.3).
        let h = history_of(&[("A", 1, 1), ("B", 2, 2), ("C", 3, 3), ("D", 4, 4)]);
        let mut counts = std::collections::HashMap::new();
        for seed in 0..10_000u64 {
            let picked = sample_random_k(&h, 1, seed);
            *counts.entry(picked[0].to_string()).or_insert(0usize) += 1;
        }
        for id in ["A", "B", "C", "D"] {
            let c = counts[id] as f64;
            assert!(
                (c - 2500.0).abs() <= 3.0 * 43.31,
                "item {id} drawn {c} times"
            );
        }
    }

    #[test]
    fn extract_k_identical_vector_is_always_selected() {
        let h = history_of(&[("X", 1, 1), ("Y", 2, 2), ("Z", 3, 3)]);
        let catalog = catalog_of(&["X", "Y", "Z", "c1"]);
        // Order: history newest-first (Z, Y, X), then candidates (c1).
        let embedder = FixedEmbedder(vec![
            vec![0.1, 0.9],  // Z
            vec![-0.5, 0.1], // Y
            vec![2.0, 2.0],  // X == c1 up to scale -> cosine 1.0
            vec![1.0, 1.0],  // c1
        ]);
        let picked = sample_extract_k(
            &h,
            &["c1".to_string()],
            &catalog,
            AttrCombo::T,
            &embedder,
            1,
        )
        .unwrap();
        assert_eq!(picked, vec!["X"]);
    }

    #[test]
    fn extract_k_all_equal_degenerates_to_latest() {
        let h = history_of(&[("X", 1, 1), ("Y", 2, 2), ("Z", 3, 3)]);
        let catalog = catalog_of(&["X", "Y", "Z", "c1"]);
        let embedder = FixedEmbedder(vec![vec![1.0, 0.0]; 4]);
        let picked = sample_extract_k(
            &h,
            &["c1".to_string()],
            &catalog,
            AttrCombo::T,
            &embedder,
            2,
        )
        .unwrap();
        assert_eq!(picked, sample_latest_k(&h, 2));
    }

    #[test]
    fn extract_k_rejects_mismatched_dimensions() {
        let h = history_of(&[("X", 1, 1), ("Y", 2, 2), ("Z", 3, 3)]);
        let catalog = catalog_of(&["X", "Y", "Z", "c1"]);
        let embedder = FixedEmbedder(vec![
            vec![1.0, 0.0],
            vec![0.5, 0.1, 0.2], // wrong dimension
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        ]);
        let err = sample_extract_k(
            &h,
            &["c1".to_string()],
            &catalog,
            AttrCombo::T,
            &embedder,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmbeddingDimension { expected: 2, got: 3 }));
    }

    #[test]
    fn extract_k_zero_norm_is_an_error() {
        let h = history_of(&[("X", 1, 1), ("Y", 2, 2), ("Z", 3, 3)]);
        let catalog = catalog_of(&["X", "Y", "Z", "c1"]);
        let embedder = FixedEmbedder(vec![
            vec![1.0, 0.0],
            vec![0.0, 0.0], // Y has a zero-norm vector
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        ]);
        let err = sample_extract_k(
            &h,
            &["c1".to_string()],
            &catalog,
            AttrCombo::T,
            &embedder,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroNormEmbedding(id) if id == "Y"));
    }

    #[test]
    fn samplers_agree_when_k_covers_history() {
        let h = history_of(&[("A", 1, 1), ("B", 2, 2), ("C", 3, 3)]);
        let catalog = catalog_of(&["A", "B", "C", "c1"]);
        let embedder = FixedEmbedder(vec![vec![1.0, 2.0]; 4]);
        let latest = sample_latest_k(&h, 5);
        assert_eq!(sample_random_k(&h, 5, 3), latest);
        assert_eq!(
            sample_extract_k(&h, &["c1".to_string()], &catalog, AttrCombo::T, &embedder, 5)
                .unwrap(),
            latest
        );
    }
}
