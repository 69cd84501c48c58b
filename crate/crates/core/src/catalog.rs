//! Review-log ingestion, dataset statistics, and evaluation-split construction.
//!
//! An evaluation instance holds one user's task: 20 shuffled candidates made
//! of the user's 2 latest items (positives) plus 18 seeded-random items the
//! user never interacted with, and the user's remaining history with the
//! positives withheld.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::seed_from_parts;
use crate::tokenize::{normalize_ws, TokenEstimator};

/// One catalog entry. Attribute strings are whitespace-normalized at load
/// time; any of them may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub description: String,
}

/// One user-item event. `seq` is the input-file line order and breaks
/// timestamp ties (later in file = newer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
    pub rating: f64,
    #[serde(default)]
    pub seq: u64,
}

/// A user's events sorted ascending by (timestamp, seq). The order is total
/// and stable, so "latest" is always well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user_id: String,
    pub events: Vec<Interaction>,
}

impl UserHistory {
    fn sort_events(&mut self) {
        self.events.sort_by_key(|e| (e.timestamp, e.seq));
    }

    /// Distinct interacted items, newest first. An item's recency is its
    /// newest event.
    pub fn items_newest_first(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for event in self.events.iter().rev() {
            if seen.insert(event.item_id.as_str()) {
                out.push(event.item_id.as_str());
            }
        }
        out
    }

    /// Set of all interacted item ids.
    pub fn item_set(&self) -> HashSet<&str> {
        self.events.iter().map(|e| e.item_id.as_str()).collect()
    }
}

/// Item catalog keyed by item_id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Catalog {
    items: BTreeMap<String, Item>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: Item) -> Option<Item> {
        self.items.insert(item.item_id.clone(), item)
    }

    pub fn get(&self, item_id: &str) -> Option<&Item> {
        self.items.get(item_id)
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.items.contains_key(item_id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Item ids in sorted order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.keys().map(|k| k.as_str())
    }

    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }
}

/// Table-1-style dataset statistics: attribute percentages over catalog
/// items and interaction-count thresholds over users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_items: usize,
    pub n_users: usize,
    pub title_le5_pct: f64,
    pub title_ge10_pct: f64,
    pub title_dup_pct: f64,
    pub category_le1_pct: f64,
    pub category_ge3_pct: f64,
    pub category_dup_pct: f64,
    pub desc_eq0_pct: f64,
    pub desc_le5_pct: f64,
    pub desc_ge50_pct: f64,
    pub users_ge50: usize,
    pub users_ge100: usize,
}

/// One user's evaluation task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub user_id: String,
    /// Shuffled candidate item ids, |positives| + |negatives| long.
    pub candidates: Vec<String>,
    /// Aligned with `candidates`; exactly n_pos entries are true.
    pub positive_mask: Vec<bool>,
    /// The user's history with every positive item's events withheld.
    pub history: UserHistory,
    /// Per-user seed derived from (split seed, user_id); drives negative
    /// sampling and the candidate shuffle.
    pub candidate_seed: u64,
}

impl EvalInstance {
    pub fn positives(&self) -> Vec<&str> {
        self.candidates
            .iter()
            .zip(&self.positive_mask)
            .filter(|(_, &pos)| pos)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line)))
}

/// Load a JSON-lines catalog file. Missing attribute keys mean empty; all
/// attribute strings are whitespace-normalized.
pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let mut catalog = Catalog::new();
    let path_str = path.display().to_string();
    for (line_no, line) in read_lines(path)? {
        let line = line.map_err(|e| Error::io(&*path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut item: Item = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path_str.clone(),
            line: line_no,
            msg: e.to_string(),
        })?;
        item.title = normalize_ws(&item.title);
        item.description = normalize_ws(&item.description);
        item.categories = item
            .categories
            .iter()
            .map(|c| normalize_ws(c))
            .filter(|c| !c.is_empty())
            .collect();
        if catalog.contains(&item.item_id) {
            return Err(Error::DuplicateItem {
                path: path_str,
                line: line_no,
                item_id: item.item_id,
            });
        }
        catalog.insert(item);
    }
    Ok(catalog)
}

/// Ingest a JSON-lines review file against a catalog.
///
/// Keeps interactions rated at least `min_rating` (inclusive), drops users
/// left with fewer than `min_count` events, and returns histories sorted by
/// user_id with events in (timestamp, file order) ascending order.
pub fn ingest_reviews(
    reviews_path: &Path,
    catalog_path: &Path,
    min_rating: f64,
    min_count: usize,
) -> Result<(Catalog, Vec<UserHistory>)> {
    let catalog = load_catalog(catalog_path)?;
    let path_str = reviews_path.display().to_string();
    let mut by_user: BTreeMap<String, Vec<Interaction>> = BTreeMap::new();

    for (line_no, line) in read_lines(reviews_path)? {
        let line = line.map_err(|e| Error::io(&*path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: Interaction =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path_str.clone(),
                line: line_no,
                msg: e.to_string(),
            })?;
        if !(1.0..=5.0).contains(&rec.rating) {
            return Err(Error::MalformedRecord {
                path: path_str,
                line: line_no,
                msg: format!("rating {} outside [1,5]", rec.rating),
            });
        }
        if rec.timestamp < 0 {
            return Err(Error::MalformedRecord {
                path: path_str,
                line: line_no,
                msg: format!("negative timestamp {}", rec.timestamp),
            });
        }
        if !catalog.contains(&rec.item_id) {
            return Err(Error::UnknownItem {
                path: path_str,
                line: line_no,
                item_id: rec.item_id,
            });
        }
        rec.seq = line_no as u64;
        if rec.rating >= min_rating {
            by_user.entry(rec.user_id.clone()).or_default().push(rec);
        }
    }

    let mut histories = Vec::new();
    for (user_id, events) in by_user {
        if events.len() < min_count {
            continue;
        }
        let mut history = UserHistory { user_id, events };
        history.sort_events();
        histories.push(history);
    }
    Ok((catalog, histories))
}

fn pct(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

fn dup_pct(values: impl Iterator<Item = String>, total: usize) -> f64 {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut stored = Vec::new();
    for v in values {
        *counts.entry(v.clone()).or_insert(0) += 1;
        stored.push(v);
    }
    let dup = stored.iter().filter(|v| counts[*v] >= 2).count();
    pct(dup, total)
}

/// Compute Table-1-style statistics over a catalog and its user histories.
///
/// Bucket conventions: an empty description counts in both the "=0" and
/// "≤5" buckets; "Dup" is the fraction of items whose normalized attribute
/// value is an exact match with at least one other item's.
pub fn compute_stats(
    catalog: &Catalog,
    histories: &[UserHistory],
    tokenizer: TokenEstimator,
) -> Result<DatasetStats> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let n = catalog.len();
    let mut title_le5 = 0;
    let mut title_ge10 = 0;
    let mut cat_le1 = 0;
    let mut cat_ge3 = 0;
    let mut desc_eq0 = 0;
    let mut desc_le5 = 0;
    let mut desc_ge50 = 0;

    for item in catalog.items() {
        let title_tokens = tokenizer.estimate(&item.title);
        if title_tokens <= 5 {
            title_le5 += 1;
        }
        if title_tokens >= 10 {
            title_ge10 += 1;
        }
        let n_cats = item.categories.len();
        if n_cats <= 1 {
            cat_le1 += 1;
        }
        if n_cats >= 3 {
            cat_ge3 += 1;
        }
        let desc_tokens = tokenizer.estimate(&item.description);
        if desc_tokens == 0 {
            desc_eq0 += 1;
        }
        if desc_tokens <= 5 {
            desc_le5 += 1;
        }
        if desc_tokens >= 50 {
            desc_ge50 += 1;
        }
    }

    let title_dup = dup_pct(catalog.items().map(|i| normalize_ws(&i.title)), n);
    let cat_dup = dup_pct(catalog.items().map(|i| i.categories.join(", ")), n);

    let users_ge50 = histories.iter().filter(|h| h.events.len() >= 50).count();
    let users_ge100 = histories.iter().filter(|h| h.events.len() >= 100).count();

    Ok(DatasetStats {
        n_items: n,
        n_users: histories.len(),
        title_le5_pct: pct(title_le5, n),
        title_ge10_pct: pct(title_ge10, n),
        title_dup_pct: title_dup,
        category_le1_pct: pct(cat_le1, n),
        category_ge3_pct: pct(cat_ge3, n),
        category_dup_pct: cat_dup,
        desc_eq0_pct: pct(desc_eq0, n),
        desc_le5_pct: pct(desc_le5, n),
        desc_ge50_pct: pct(desc_ge50, n),
        users_ge50,
        users_ge100,
    })
}

/// A user qualifies for evaluation if, after withholding `n_pos` positives,
/// at least one history event remains.
pub fn eligible_users(histories: &[UserHistory], n_pos: usize) -> Vec<&UserHistory> {
    histories
        .iter()
        .filter(|h| h.items_newest_first().len() > n_pos)
        .collect()
}

/// Split eligible users into two disjoint pools by seeded shuffle.
/// Validation and test splits never share a user.
pub fn partition_pools(
    histories: &[UserHistory],
    n_first: usize,
    n_second: usize,
    n_pos: usize,
    seed: u64,
) -> Result<(Vec<UserHistory>, Vec<UserHistory>)> {
    let mut eligible = eligible_users(histories, n_pos);
    if eligible.len() < n_first + n_second {
        return Err(Error::NotEnoughUsers {
            requested: n_first + n_second,
            available: eligible.len(),
        });
    }
    eligible.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let mut rng = StdRng::seed_from_u64(seed_from_parts(&["partition", &seed.to_string()]));
    eligible.shuffle(&mut rng);
    let first = eligible[..n_first].iter().map(|h| (*h).clone()).collect();
    let second = eligible[n_first..n_first + n_second]
        .iter()
        .map(|h| (*h).clone())
        .collect();
    Ok((first, second))
}

/// Build evaluation instances for the first `n_users` eligible users in
/// sorted user_id order.
///
/// Per user: positives are the latest `n_pos` distinct items; negatives are
/// `n_neg` items sampled uniformly without replacement from catalog items the
/// user never interacted with, seeded by (seed, user_id); candidates are the
/// shuffled union; the returned history withholds every positive item's
/// events. A pure function of its inputs: changing `seed` changes negatives
/// and shuffle order but never positives.
pub fn build_eval_split(
    histories: &[UserHistory],
    catalog: &Catalog,
    n_users: usize,
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<Vec<EvalInstance>> {
    let mut eligible = eligible_users(histories, n_pos);
    eligible.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    if eligible.len() < n_users {
        return Err(Error::NotEnoughUsers {
            requested: n_users,
            available: eligible.len(),
        });
    }

    let mut instances = Vec::with_capacity(n_users);
    for history in eligible.into_iter().take(n_users) {
        let candidate_seed = seed_from_parts(&["split", &seed.to_string(), &history.user_id]);
        let mut rng = StdRng::seed_from_u64(candidate_seed);

        let positives: Vec<String> = history
            .items_newest_first()
            .into_iter()
            .take(n_pos)
            .map(String::from)
            .collect();
        let positive_set: HashSet<&str> = positives.iter().map(|s| s.as_str()).collect();

        let interacted = history.item_set();
        let pool: Vec<&str> = catalog.ids().filter(|id| !interacted.contains(id)).collect();
        if pool.len() < n_neg {
            return Err(Error::CatalogTooSmall {
                user_id: history.user_id.clone(),
                needed: n_neg,
            });
        }
        let negatives: Vec<String> = {
            let idx = rand::seq::index::sample(&mut rng, pool.len(), n_neg);
            let mut chosen: Vec<usize> = idx.into_iter().collect();
            chosen.sort_unstable();
            chosen.into_iter().map(|i| pool[i].to_string()).collect()
        };

        let mut labeled: Vec<(String, bool)> = positives
            .iter()
            .map(|p| (p.clone(), true))
            .chain(negatives.into_iter().map(|n| (n, false)))
            .collect();
        labeled.shuffle(&mut rng);

        let remaining: Vec<Interaction> = history
            .events
            .iter()
            .filter(|e| !positive_set.contains(e.item_id.as_str()))
            .cloned()
            .collect();
        debug_assert!(!remaining.is_empty());

        instances.push(EvalInstance {
            user_id: history.user_id.clone(),
            candidates: labeled.iter().map(|(id, _)| id.clone()).collect(),
            positive_mask: labeled.iter().map(|(_, pos)| *pos).collect(),
            history: UserHistory {
                user_id: history.user_id.clone(),
                events: remaining,
            },
            candidate_seed,
        });
    }
    Ok(instances)
}
