//! Item and prompt rendering.
//!
//! The prompt wording lives in one versioned template file
//! (`templates/prompts.txt`, compiled in as the default) with placeholders
//! {genre}, {user_block}, {candidates}, and {recency_line}, so experiments
//! stay reproducible against a hashed template. An inference prompt has five
//! parts in order: role line, task instructions, user-information block,
//! numbered candidate block, and a reiterated instruction; Latest-format
//! specs additionally get a recency-focused line before the candidate block.

use std::path::Path;

use crate::catalog::{Catalog, EvalInstance, Item};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::promptgrid::{AttrCombo, PromptSpec, SampleFormat};
use crate::tokenize::TokenEstimator;

/// Header line introducing the user-information block. The mock oracle keys
/// off these markers, so custom templates should keep them.
pub const USER_BLOCK_HEADER: &str = "Here is information about me:";
/// Header line introducing the numbered candidate block.
pub const CANDIDATES_HEADER: &str = "Here are the 20 candidate items:";
const SUMMARY_MARKER: &str = "summarizing my preferences";

/// Render one item line for prompts: labeled fields joined by " | " in
/// title, category, description order; empty fields render as "None".
pub fn render_item(item: &Item, attrs: AttrCombo) -> String {
    let mut parts = Vec::new();
    let or_none = |s: &str| {
        if s.is_empty() {
            "None".to_string()
        } else {
            s.to_string()
        }
    };
    if attrs.has_title() {
        parts.push(format!("title: {}", or_none(&item.title)));
    }
    if attrs.has_category() {
        parts.push(format!("category: {}", or_none(&item.categories.join(", "))));
    }
    if attrs.has_description() {
        parts.push(format!("description: {}", or_none(&item.description)));
    }
    parts.join(" | ")
}

/// Text embedded for Extract-k similarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingText {
    pub item_id: String,
    pub text: String,
}

/// Rendering rule for embedding text: T/TD -> "{title}", C/CD ->
/// "{category}", TC/TCD -> "{title}-{category}".
pub fn render_embedding_text(item: &Item, attrs: AttrCombo) -> EmbeddingText {
    let categories = item.categories.join(", ");
    let text = match (attrs.has_title(), attrs.has_category()) {
        (true, false) => item.title.clone(),
        (false, true) => categories,
        (true, true) => format!("{}-{}", item.title, categories),
        (false, false) => unreachable!("every attr combo includes title or category"),
    };
    EmbeddingText {
        item_id: item.item_id.clone(),
        text,
    }
}

/// The template file split into its sections.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    inference: String,
    summarization: String,
    recency: String,
    raw: String,
}

impl PromptTemplates {
    /// The template file checked into the repo.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../templates/prompts.txt")).expect("builtin template parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&raw)
    }

    /// Sections are introduced by `[inference]`, `[recency]`, and
    /// `[summarization]` lines.
    pub fn parse(raw: &str) -> Result<Self> {
        let mut sections: std::collections::BTreeMap<String, Vec<&str>> =
            std::collections::BTreeMap::new();
        let mut current: Option<String> = None;
        for line in raw.lines() {
            let trimmed = line.trim();
            if trimmed.starts_with('[') && trimmed.ends_with(']') {
                current = Some(trimmed[1..trimmed.len() - 1].to_string());
                continue;
            }
            if let Some(section) = &current {
                sections.entry(section.clone()).or_default().push(line);
            }
        }
        let get = |name: &str| -> Result<String> {
            sections
                .get(name)
                .map(|lines| lines.join("\n").trim().to_string())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Config(format!("template file missing [{name}] section")))
        };
        Ok(PromptTemplates {
            inference: get("inference")?,
            summarization: get("summarization")?,
            recency: get("recency")?,
            raw: raw.to_string(),
        })
    }

    /// Hash recorded in the run manifest.
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.raw)
    }
}

/// A rendered prompt with its token estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptText {
    pub text: String,
    pub estimated_tokens: usize,
    pub spec: PromptSpec,
    pub user_id: String,
}

/// Renders inference and summarization prompts for one dataset.
pub struct PromptRenderer<'a> {
    pub templates: &'a PromptTemplates,
    pub genre: &'a str,
    pub estimator: TokenEstimator,
    pub context_limit: usize,
}

impl<'a> PromptRenderer<'a> {
    pub fn new(templates: &'a PromptTemplates, genre: &'a str, context_limit: usize) -> Self {
        PromptRenderer {
            templates,
            genre,
            estimator: TokenEstimator::BytesPer4,
            context_limit,
        }
    }

    fn finish(&self, text: String, spec: &PromptSpec, user_id: &str) -> Result<PromptText> {
        let estimated_tokens = self.estimator.estimate(&text);
        if estimated_tokens > self.context_limit {
            return Err(Error::ContextOverflow {
                spec: spec.name(),
                user_id: user_id.to_string(),
                tokens: estimated_tokens,
                limit: self.context_limit,
            });
        }
        Ok(PromptText {
            text,
            estimated_tokens,
            spec: *spec,
            user_id: user_id.to_string(),
        })
    }

    /// Render the inference prompt around an already-built user block (a
    /// bulleted item list for sampling specs, a summary paragraph for
    /// summarizing specs).
    pub fn inference_prompt(
        &self,
        instance: &EvalInstance,
        spec: &PromptSpec,
        user_block: &str,
        catalog: &Catalog,
    ) -> Result<PromptText> {
        let mut candidates = String::new();
        for (i, id) in instance.candidates.iter().enumerate() {
            let item = catalog
                .get(id)
                .ok_or_else(|| Error::Config(format!("candidate {id} not in catalog")))?;
            if i > 0 {
                candidates.push('\n');
            }
            candidates.push_str(&format!("{}. {}", i + 1, render_item(item, spec.attrs)));
        }

        let recency = if spec.format == SampleFormat::Latest {
            self.templates.recency.replace("{genre}", self.genre)
        } else {
            String::new()
        };

        let mut text = self
            .templates
            .inference
            .replace("{genre}", self.genre)
            .replace("{user_block}", user_block)
            .replace("{candidates}", &candidates);
        if recency.is_empty() {
            text = text.replace("\n{recency_line}", "").replace("{recency_line}", "");
        } else {
            text = text.replace("{recency_line}", &recency);
        }
        self.finish(text, spec, &instance.user_id)
    }

    /// Render the summarization prompt over the sampled items.
    pub fn summarization_prompt(
        &self,
        items: &[&Item],
        spec: &PromptSpec,
        user_id: &str,
    ) -> Result<PromptText> {
        if items.is_empty() {
            return Err(Error::Config(
                "summarization prompt needs at least one item".into(),
            ));
        }
        let block = items
            .iter()
            .map(|item| format!("- {}", render_item(item, spec.attrs)))
            .collect::<Vec<_>>()
            .join("\n");
        let text = self
            .templates
            .summarization
            .replace("{genre}", self.genre)
            .replace("{user_block}", &block);
        self.finish(text, spec, user_id)
    }

    /// Bulleted user block for sampling-approach specs.
    pub fn item_block(&self, items: &[&Item], attrs: AttrCombo) -> String {
        items
            .iter()
            .map(|item| format!("- {}", render_item(item, attrs)))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// True if this text is one of our summarization prompts (used by the mock
/// oracle to pick a response shape).
pub fn is_summarization_prompt(text: &str) -> bool {
    text.contains(SUMMARY_MARKER)
}
