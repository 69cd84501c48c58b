//! The prompt grid: which items represent the user and how they are rendered.
//!
//! A grid point combines an approach (directly sampling items vs. summarizing
//! them first), a sampling format (Random / Latest / Extract), a sample size
//! k, and an item-attribute combination. Canonical names follow the
//! "R-10-T" / "SE-100-TCD" shorthand: summarizing specs prefix the format
//! letter with S.

mod render;
mod sampling;

pub use render::{
    is_summarization_prompt, render_embedding_text, render_item, EmbeddingText, PromptRenderer,
    PromptText, PromptTemplates, CANDIDATES_HEADER, USER_BLOCK_HEADER,
};
pub use sampling::{sample_extract_k, sample_latest_k, sample_random_k, Embedder};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Item attribute combination rendered into prompts. Description-only is
/// deliberately not a member: too many items have empty descriptions for it
/// to stand alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttrCombo {
    T,
    C,
    TC,
    TD,
    CD,
    TCD,
}

impl AttrCombo {
    pub const ALL: [AttrCombo; 6] = [
        AttrCombo::T,
        AttrCombo::C,
        AttrCombo::TC,
        AttrCombo::TD,
        AttrCombo::CD,
        AttrCombo::TCD,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttrCombo::T => "T",
            AttrCombo::C => "C",
            AttrCombo::TC => "TC",
            AttrCombo::TD => "TD",
            AttrCombo::CD => "CD",
            AttrCombo::TCD => "TCD",
        }
    }

    pub fn has_title(&self) -> bool {
        matches!(self, AttrCombo::T | AttrCombo::TC | AttrCombo::TD | AttrCombo::TCD)
    }

    pub fn has_category(&self) -> bool {
        matches!(self, AttrCombo::C | AttrCombo::TC | AttrCombo::CD | AttrCombo::TCD)
    }

    pub fn has_description(&self) -> bool {
        matches!(self, AttrCombo::TD | AttrCombo::CD | AttrCombo::TCD)
    }
}

impl FromStr for AttrCombo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AttrCombo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::BadSpecName(s.to_string()))
    }
}

impl fmt::Display for AttrCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Item sampling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SampleFormat {
    Random,
    Latest,
    Extract,
}

impl SampleFormat {
    pub const ALL: [SampleFormat; 3] = [
        SampleFormat::Random,
        SampleFormat::Latest,
        SampleFormat::Extract,
    ];

    pub fn letter(&self) -> &'static str {
        match self {
            SampleFormat::Random => "R",
            SampleFormat::Latest => "L",
            SampleFormat::Extract => "E",
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        SampleFormat::ALL.into_iter().find(|f| f.letter() == s)
    }
}

/// Whether sampled items go into the prompt directly or through a
/// summarization call first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Approach {
    Sampling,
    Summarizing,
}

impl Approach {
    pub fn name(&self) -> &'static str {
        match self {
            Approach::Sampling => "sampling",
            Approach::Summarizing => "summarizing",
        }
    }
}

impl Serialize for Approach {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Approach {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        match raw.as_str() {
            "sampling" => Ok(Approach::Sampling),
            "summarizing" => Ok(Approach::Summarizing),
            other => Err(serde::de::Error::custom(format!("unknown approach {other}"))),
        }
    }
}

/// One point in the prompt grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PromptSpec {
    pub approach: Approach,
    pub format: SampleFormat,
    pub k: u32,
    pub attrs: AttrCombo,
}

impl PromptSpec {
    pub fn sampling(format: SampleFormat, k: u32, attrs: AttrCombo) -> Self {
        PromptSpec {
            approach: Approach::Sampling,
            format,
            k,
            attrs,
        }
    }

    pub fn summarizing(format: SampleFormat, k: u32, attrs: AttrCombo) -> Self {
        PromptSpec {
            approach: Approach::Summarizing,
            format,
            k,
            attrs,
        }
    }

    /// Canonical shorthand, e.g. "R-10-T" or "SE-100-TCD".
    pub fn name(&self) -> String {
        let prefix = match self.approach {
            Approach::Sampling => String::new(),
            Approach::Summarizing => "S".to_string(),
        };
        format!("{prefix}{}-{}-{}", self.format.letter(), self.k, self.attrs)
    }
}

impl fmt::Display for PromptSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PromptSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadSpecName(s.to_string());
        let mut parts = s.split('-');
        let (fmt_part, k_part, attrs_part) = match (parts.next(), parts.next(), parts.next(), parts.next())
        {
            (Some(f), Some(k), Some(a), None) => (f, k, a),
            _ => return Err(bad()),
        };
        let (approach, fmt_letter) = match fmt_part.strip_prefix('S') {
            Some(rest) if !rest.is_empty() => (Approach::Summarizing, rest),
            _ => (Approach::Sampling, fmt_part),
        };
        let format = SampleFormat::from_letter(fmt_letter).ok_or_else(bad)?;
        let k: u32 = k_part.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        let attrs: AttrCombo = attrs_part.parse().map_err(|_| bad())?;
        Ok(PromptSpec {
            approach,
            format,
            k,
            attrs,
        })
    }
}

impl Serialize for PromptSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for PromptSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Grid dimensions. The default reproduces the 90-prompt grid: 3 formats x
/// 4 sizes x 6 attribute combos sampled directly, plus per-format summaries
/// at k=30 for T/C/TC and k=100 for TD/CD/TCD.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub formats: Vec<SampleFormat>,
    pub sizes: Vec<u32>,
    pub attrs: Vec<AttrCombo>,
    /// Sample size used when summarizing, per attribute combo.
    pub summary_sizes: BTreeMap<AttrCombo, u32>,
    /// Estimated-token budget for a rendered prompt.
    pub context_limit: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let mut summary_sizes = BTreeMap::new();
        for attrs in [AttrCombo::T, AttrCombo::C, AttrCombo::TC] {
            summary_sizes.insert(attrs, 30);
        }
        for attrs in [AttrCombo::TD, AttrCombo::CD, AttrCombo::TCD] {
            summary_sizes.insert(attrs, 100);
        }
        GridConfig {
            formats: SampleFormat::ALL.to_vec(),
            sizes: vec![5, 10, 20, 30],
            attrs: AttrCombo::ALL.to_vec(),
            summary_sizes,
            context_limit: 16_384,
        }
    }
}

/// Enumerate the grid in deterministic (approach, format, k, attrs) order.
pub fn enumerate_grid(config: &GridConfig) -> Result<Vec<PromptSpec>> {
    if config.formats.is_empty() {
        return Err(Error::EmptyGridDimension("formats".into()));
    }
    if config.sizes.is_empty() {
        return Err(Error::EmptyGridDimension("sizes".into()));
    }
    if config.attrs.is_empty() {
        return Err(Error::EmptyGridDimension("attrs".into()));
    }

    let mut formats = config.formats.clone();
    formats.sort_unstable();
    formats.dedup();
    let mut sizes = config.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut attrs = config.attrs.clone();
    attrs.sort_unstable();
    attrs.dedup();

    let mut specs = Vec::new();
    for &format in &formats {
        for &k in &sizes {
            for &a in &attrs {
                specs.push(PromptSpec::sampling(format, k, a));
            }
        }
    }
    if !config.summary_sizes.is_empty() {
        for &format in &formats {
            let mut summarizing = Vec::new();
            for &a in &attrs {
                let k = *config.summary_sizes.get(&a).ok_or_else(|| {
                    Error::Config(format!("no summary size configured for attrs {a}"))
                })?;
                summarizing.push(PromptSpec::summarizing(format, k, a));
            }
            summarizing.sort_unstable();
            specs.extend(summarizing);
        }
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_90_specs() {
        let specs = enumerate_grid(&GridConfig::default()).unwrap();
        assert_eq!(specs.len(), 90);
        let sampling = specs
            .iter()
            .filter(|s| s.approach == Approach::Sampling)
            .count();
        let summarizing = specs
            .iter()
            .filter(|s| s.approach == Approach::Summarizing)
            .count();
        assert_eq!(sampling, 72);
        assert_eq!(summarizing, 18);
    }

    #[test]
    fn grid_names_round_trip() {
        let specs = enumerate_grid(&GridConfig::default()).unwrap();
        for spec in specs {
            let parsed: PromptSpec = spec.name().parse().unwrap();
            assert_eq!(parsed, spec);
        }
    }

    #[test]
    fn singleton_grid() {
        let config = GridConfig {
            formats: vec![SampleFormat::Latest],
            sizes: vec![10],
            attrs: vec![AttrCombo::T],
            summary_sizes: BTreeMap::new(),
            ..GridConfig::default()
        };
        let specs = enumerate_grid(&config).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].name(), "L-10-T");
    }

    #[test]
    fn enumeration_is_deterministic() {
        let a = enumerate_grid(&GridConfig::default()).unwrap();
        let b = enumerate_grid(&GridConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dimension_is_an_error() {
        let config = GridConfig {
            sizes: vec![],
            ..GridConfig::default()
        };
        assert!(matches!(
            enumerate_grid(&config),
            Err(Error::EmptyGridDimension(_))
        ));
    }

    #[test]
    fn spec_names() {
        assert_eq!(
            PromptSpec::sampling(SampleFormat::Random, 10, AttrCombo::T).name(),
            "R-10-T"
        );
        assert_eq!(
            PromptSpec::summarizing(SampleFormat::Extract, 100, AttrCombo::TCD).name(),
            "SE-100-TCD"
        );
        let parsed: PromptSpec = "SR-30-TD".parse().unwrap();
        assert_eq!(parsed.approach, Approach::Summarizing);
        assert_eq!(parsed.format, SampleFormat::Random);
        assert_eq!(parsed.k, 30);
        assert_eq!(parsed.attrs, AttrCombo::TD);
        assert!("D-10-T".parse::<PromptSpec>().is_err());
        assert!("R-0-T".parse::<PromptSpec>().is_err());
        assert!("R-10".parse::<PromptSpec>().is_err());
    }
}
