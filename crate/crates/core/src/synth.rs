//! Seeded synthetic review corpora with attribute-correlated preferences.
//!
//! Each user favors one latent cluster. Cluster identity is carried weakly by
//! titles (one cluster token among generic ones) and strongly by categories
//! and descriptions, so prompts that render richer attributes give the
//! lexical mock oracle more signal. Histories end with in-cluster events, so
//! withheld positives share their cluster with the remaining history.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::catalog::{Catalog, Interaction, Item, UserHistory};
use crate::error::{Error, Result};
use crate::hashing::seed_from_parts;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_clusters: usize,
    pub items_per_cluster: usize,
    pub n_users: usize,
    pub events_min: usize,
    pub events_max: usize,
    /// Probability that an event stays inside the user's cluster.
    pub in_cluster_prob: f64,
    /// Fraction of events rated below 3 stars (dropped by the default
    /// ingest filter).
    pub low_rating_frac: f64,
    /// Fraction of items with an empty description.
    pub empty_desc_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            n_clusters: 6,
            items_per_cluster: 50,
            n_users: 40,
            events_min: 34,
            events_max: 44,
            in_cluster_prob: 0.85,
            low_rating_frac: 0.08,
            empty_desc_frac: 0.1,
        }
    }
}

pub struct SynthDataset {
    pub catalog: Catalog,
    pub reviews: Vec<Interaction>,
}

/// Generate a corpus. Pure function of the config.
pub fn generate(config: &SynthConfig) -> SynthDataset {
    let mut rng = StdRng::seed_from_u64(seed_from_parts(&["synth", &config.seed.to_string()]));
    let generic: Vec<String> = (0..60).map(|i| format!("common{i}")).collect();

    let mut catalog = Catalog::new();
    let mut cluster_items: Vec<Vec<String>> = vec![Vec::new(); config.n_clusters];
    for (cluster, items) in cluster_items.iter_mut().enumerate() {
        for i in 0..config.items_per_cluster {
            let item_id = format!("c{cluster}i{i:03}");
            let title = format!(
                "{} {} tone{cluster}x{i}",
                generic[rng.random_range(0..generic.len())],
                generic[rng.random_range(0..generic.len())],
            );
            let n_cats = rng.random_range(1..=3);
            let mut categories: Vec<String> =
                (0..3).map(|j| format!("genrecluster{cluster}tag{j}")).collect();
            categories.shuffle(&mut rng);
            categories.truncate(n_cats);
            let description = if rng.random_bool(config.empty_desc_frac) {
                String::new()
            } else {
                let mut words: Vec<String> = (0..5)
                    .map(|_| format!("theme{cluster}w{}", rng.random_range(0..12)))
                    .collect();
                words.push(generic[rng.random_range(0..generic.len())].clone());
                words.join(" ")
            };
            catalog.insert(Item {
                item_id: item_id.clone(),
                title,
                categories,
                description,
            });
            items.push(item_id);
        }
    }

    let mut reviews = Vec::new();
    let mut seq = 0u64;
    for u in 0..config.n_users {
        let user_id = format!("user{u:04}");
        let cluster = u % config.n_clusters;
        let n_events = rng.random_range(config.events_min..=config.events_max);

        // Sample distinct items: mostly in-cluster, the final two always
        // in-cluster so the withheld positives match the history's cluster.
        let mut own: Vec<String> = cluster_items[cluster].clone();
        own.shuffle(&mut rng);
        let mut other: Vec<String> = (0..config.n_clusters)
            .filter(|&c| c != cluster)
            .flat_map(|c| cluster_items[c].iter().cloned())
            .collect();
        other.shuffle(&mut rng);

        let mut picked: Vec<String> = Vec::with_capacity(n_events);
        for i in 0..n_events {
            let force_in_cluster = i + 2 >= n_events;
            let in_cluster = force_in_cluster || rng.random_bool(config.in_cluster_prob);
            let source = if in_cluster { &mut own } else { &mut other };
            match source.pop() {
                Some(id) => picked.push(id),
                None => {
                    if let Some(id) = own.pop().or_else(|| other.pop()) {
                        picked.push(id);
                    }
                }
            }
        }

        let base_ts = 1_000_000 + (u as i64) * 100_000;
        let mut prev_ts = base_ts;
        for (i, item_id) in picked.iter().enumerate() {
            let rating = if rng.random_bool(config.low_rating_frac) {
                rng.random_range(1..=2) as f64
            } else {
                rng.random_range(3..=5) as f64
            };
            // Occasional timestamp ties exercise the file-order tie-break.
            let ts = if i > 0 && rng.random_bool(0.05) {
                prev_ts
            } else {
                base_ts + (i as i64) * 10 + rng.random_range(0..3)
            };
            prev_ts = ts;
            seq += 1;
            reviews.push(Interaction {
                user_id: user_id.clone(),
                item_id: item_id.clone(),
                timestamp: ts,
                rating,
                seq,
            });
        }
    }

    SynthDataset { catalog, reviews }
}

impl SynthDataset {
    /// Write items.jsonl / reviews.jsonl in the ingest wire format.
    pub fn write_jsonl(&self, dir: &std::path::Path) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let items_path = dir.join("items.jsonl");
        let reviews_path = dir.join("reviews.jsonl");

        let mut items = String::new();
        for item in self.catalog.items() {
            items.push_str(&serde_json::to_string(item)?);
            items.push('\n');
        }
        std::fs::write(&items_path, items)
            .map_err(|e| Error::io(items_path.display().to_string(), e))?;

        let mut reviews = String::new();
        for r in &self.reviews {
            reviews.push_str(&serde_json::json!({
                "user_id": r.user_id,
                "item_id": r.item_id,
                "rating": r.rating,
                "timestamp": r.timestamp,
            }).to_string());
            reviews.push('\n');
        }
        std::fs::write(&reviews_path, reviews)
            .map_err(|e| Error::io(reviews_path.display().to_string(), e))?;
        Ok((items_path, reviews_path))
    }

    /// In-memory ingest with the standard filters.
    pub fn ingest(&self, min_rating: f64, min_count: usize) -> (Catalog, Vec<UserHistory>) {
        let mut by_user: std::collections::BTreeMap<String, Vec<Interaction>> =
            std::collections::BTreeMap::new();
        for r in &self.reviews {
            if r.rating >= min_rating {
                by_user.entry(r.user_id.clone()).or_default().push(r.clone());
            }
        }
        let histories = by_user
            .into_iter()
            .filter(|(_, events)| events.len() >= min_count)
            .map(|(user_id, mut events)| {
                events.sort_by_key(|e| (e.timestamp, e.seq));
                UserHistory { user_id, events }
            })
            .collect();
        (self.catalog.clone(), histories)
    }
}
