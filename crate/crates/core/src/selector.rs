//! RPI tables and the GS / RPI / GS* selection strategies.
//!
//! The relative performance indicator of a component value v (a format, a
//! sample size, or an attribute combo) collects every ordered pair of specs
//! that agree on all other dimensions and differ only in that one, averages
//! the accuracy ratios acc(p with v) / acc(p' with v'), and reports the
//! average minus one as a percentage. Positive RPI means prompts using v
//! outperform otherwise-identical prompts using the alternatives.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::EvalInstance;
use crate::error::{Error, Result};

/// Streaming sink for freshly evaluated results (mirrors the run loop's
/// results.jsonl appends).
pub type ResultSink<'a> = &'a mut dyn FnMut(&EvalResult) -> Result<()>;
use crate::metrics::{evaluate_prompt, EvalResult, EvalSetup, PromptResult, ResultGrid};
use crate::promptgrid::{Approach, AttrCombo, PromptSpec, SampleFormat};

/// A prompt-grid dimension within one approach. Summarizing specs have no
/// independent Size dimension: their sample size is tied to the attribute
/// combo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Format,
    Size,
    Attrs,
}

/// Ratio-averaging convention. The worked figure in the source material can
/// be read either way; they differ only in late decimals on real grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpiMode {
    /// Mean over all ordered same-context pairs (default).
    #[default]
    Pairwise,
    /// Each cell's ratio to the mean of its same-context alternatives,
    /// then averaged.
    RatioToMeanOfOthers,
}

/// RPI percentages for one dimension, in canonical value order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRpi {
    pub dimension: Dimension,
    pub values: Vec<(String, f64)>,
}

impl DimensionRpi {
    /// Highest-RPI value; ties go to the first in canonical order.
    pub fn argmax(&self) -> &str {
        let mut best = &self.values[0];
        for entry in &self.values[1..] {
            if entry.1 > best.1 {
                best = entry;
            }
        }
        &best.0
    }
}

/// Full RPI analysis of one approach on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpiTable {
    pub approach: Approach,
    pub dimensions: Vec<DimensionRpi>,
}

impl RpiTable {
    pub fn dimension(&self, dimension: Dimension) -> Option<&DimensionRpi> {
        self.dimensions.iter().find(|d| d.dimension == dimension)
    }
}

/// The complete factorial of one approach present in a grid.
struct Factorial {
    formats: Vec<SampleFormat>,
    sizes: Vec<u32>,
    attrs: Vec<AttrCombo>,
    /// Summarizing only: the sample size tied to each attrs value.
    summary_sizes: BTreeMap<AttrCombo, u32>,
    /// Accuracy by (format, k, attrs).
    acc: BTreeMap<(SampleFormat, u32, AttrCombo), f64>,
    approach: Approach,
}

impl Factorial {
    fn build(grid: &ResultGrid, dataset: &str, approach: Approach) -> Result<Self> {
        let mut formats: Vec<SampleFormat> = Vec::new();
        let mut sizes: Vec<u32> = Vec::new();
        let mut attrs: Vec<AttrCombo> = Vec::new();
        let mut summary_sizes: BTreeMap<AttrCombo, u32> = BTreeMap::new();
        let mut acc = BTreeMap::new();

        for result in grid.results_for(dataset) {
            let spec = result.spec;
            if spec.approach != approach {
                continue;
            }
            if !formats.contains(&spec.format) {
                formats.push(spec.format);
            }
            if !sizes.contains(&spec.k) {
                sizes.push(spec.k);
            }
            if !attrs.contains(&spec.attrs) {
                attrs.push(spec.attrs);
            }
            if approach == Approach::Summarizing {
                if let Some(&k) = summary_sizes.get(&spec.attrs) {
                    if k != spec.k {
                        return Err(Error::Config(format!(
                            "inconsistent summary sizes for attrs {}: {k} vs {}",
                            spec.attrs, spec.k
                        )));
                    }
                } else {
                    summary_sizes.insert(spec.attrs, spec.k);
                }
            }
            acc.insert((spec.format, spec.k, spec.attrs), result.mean_ndcg);
        }

        formats.sort_unstable();
        sizes.sort_unstable();
        attrs.sort_unstable();
        if formats.is_empty() {
            return Err(Error::IncompleteGrid(vec![format!(
                "no {} specs for dataset {dataset}",
                approach.name()
            )]));
        }

        // Every cell of the factorial must be present.
        let mut missing = Vec::new();
        match approach {
            Approach::Sampling => {
                for &f in &formats {
                    for &k in &sizes {
                        for &a in &attrs {
                            if !acc.contains_key(&(f, k, a)) {
                                missing.push(PromptSpec::sampling(f, k, a).name());
                            }
                        }
                    }
                }
            }
            Approach::Summarizing => {
                for &f in &formats {
                    for &a in &attrs {
                        let k = summary_sizes[&a];
                        if !acc.contains_key(&(f, k, a)) {
                            missing.push(PromptSpec::summarizing(f, k, a).name());
                        }
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteGrid(missing));
        }

        Ok(Factorial {
            formats,
            sizes,
            attrs,
            summary_sizes,
            acc,
            approach,
        })
    }

    fn accuracy(&self, f: SampleFormat, k: u32, a: AttrCombo) -> f64 {
        self.acc[&(f, k, a)]
    }

    fn format_name(&self, f: SampleFormat) -> String {
        match self.approach {
            Approach::Sampling => f.letter().to_string(),
            Approach::Summarizing => format!("S{}", f.letter()),
        }
    }
}

/// Average target/alternative accuracy ratios for one dimension value.
///
/// `cells` is one entry per context (all other dimensions fixed): the
/// target's accuracy and the alternatives' accuracies in that context.
fn averaged_rpi(cells: &[(f64, Vec<f64>)], mode: RpiMode, value_name: &str) -> Result<f64> {
    let mut ratios = Vec::new();
    for (target, others) in cells {
        if others.is_empty() {
            continue; // single-value dimension: nothing to compare against
        }
        match mode {
            RpiMode::Pairwise => {
                for &other in others {
                    if other == 0.0 {
                        return Err(Error::ZeroAccuracy(value_name.to_string()));
                    }
                    ratios.push(target / other);
                }
            }
            RpiMode::RatioToMeanOfOthers => {
                let mean = others.iter().sum::<f64>() / others.len() as f64;
                if mean == 0.0 {
                    return Err(Error::ZeroAccuracy(value_name.to_string()));
                }
                ratios.push(target / mean);
            }
        }
    }
    if ratios.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * (ratios.iter().sum::<f64>() / ratios.len() as f64 - 1.0))
}

/// RPI of every value of one dimension, in canonical order.
pub fn compute_rpi(
    grid: &ResultGrid,
    dataset: &str,
    approach: Approach,
    dimension: Dimension,
    mode: RpiMode,
) -> Result<Vec<(String, f64)>> {
    let fact = Factorial::build(grid, dataset, approach)?;
    if approach == Approach::Summarizing && dimension == Dimension::Size {
        return Err(Error::Config(
            "summarizing specs have no independent size dimension".into(),
        ));
    }

    let mut out = Vec::new();
    match dimension {
        Dimension::Format => {
            for &v in &fact.formats {
                let mut cells = Vec::new();
                match fact.approach {
                    Approach::Sampling => {
                        for &k in &fact.sizes {
                            for &a in &fact.attrs {
                                let target = fact.accuracy(v, k, a);
                                let others = fact
                                    .formats
                                    .iter()
                                    .filter(|&&f| f != v)
                                    .map(|&f| fact.accuracy(f, k, a))
                                    .collect();
                                cells.push((target, others));
                            }
                        }
                    }
                    Approach::Summarizing => {
                        for &a in &fact.attrs {
                            let k = fact.summary_sizes[&a];
                            let target = fact.accuracy(v, k, a);
                            let others = fact
                                .formats
                                .iter()
                                .filter(|&&f| f != v)
                                .map(|&f| fact.accuracy(f, k, a))
                                .collect();
                            cells.push((target, others));
                        }
                    }
                }
                let name = fact.format_name(v);
                let rpi = averaged_rpi(&cells, mode, &name)?;
                out.push((name, rpi));
            }
        }
        Dimension::Size => {
            for &v in &fact.sizes {
                let mut cells = Vec::new();
                for &f in &fact.formats {
                    for &a in &fact.attrs {
                        let target = fact.accuracy(f, v, a);
                        let others = fact
                            .sizes
                            .iter()
                            .filter(|&&k| k != v)
                            .map(|&k| fact.accuracy(f, k, a))
                            .collect();
                        cells.push((target, others));
                    }
                }
                let name = v.to_string();
                let rpi = averaged_rpi(&cells, mode, &name)?;
                out.push((name, rpi));
            }
        }
        Dimension::Attrs => {
            for &v in &fact.attrs {
                let mut cells = Vec::new();
                for &f in &fact.formats {
                    match fact.approach {
                        Approach::Sampling => {
                            for &k in &fact.sizes {
                                let target = fact.accuracy(f, k, v);
                                let others = fact
                                    .attrs
                                    .iter()
                                    .filter(|&&a| a != v)
                                    .map(|&a| fact.accuracy(f, k, a))
                                    .collect();
                                cells.push((target, others));
                            }
                        }
                        Approach::Summarizing => {
                            let target = fact.accuracy(f, fact.summary_sizes[&v], v);
                            let others = fact
                                .attrs
                                .iter()
                                .filter(|&&a| a != v)
                                .map(|&a| fact.accuracy(f, fact.summary_sizes[&a], a))
                                .collect();
                            cells.push((target, others));
                        }
                    }
                }
                let name = v.to_string();
                let rpi = averaged_rpi(&cells, mode, &name)?;
                out.push((name, rpi));
            }
        }
    }
    Ok(out)
}

/// RPI analysis over every dimension the approach has.
pub fn rpi_analysis(
    grid: &ResultGrid,
    dataset: &str,
    approach: Approach,
    mode: RpiMode,
) -> Result<RpiTable> {
    let mut dimensions = vec![DimensionRpi {
        dimension: Dimension::Format,
        values: compute_rpi(grid, dataset, approach, Dimension::Format, mode)?,
    }];
    if approach == Approach::Sampling {
        dimensions.push(DimensionRpi {
            dimension: Dimension::Size,
            values: compute_rpi(grid, dataset, approach, Dimension::Size, mode)?,
        });
    }
    dimensions.push(DimensionRpi {
        dimension: Dimension::Attrs,
        values: compute_rpi(grid, dataset, approach, Dimension::Attrs, mode)?,
    });
    Ok(RpiTable {
        approach,
        dimensions,
    })
}

/// Assemble the spec from each dimension's best-RPI value. For summarizing
/// tables the sample size follows the chosen attrs via `summary_sizes`.
pub fn best_combo_from_rpi(
    table: &RpiTable,
    summary_sizes: &BTreeMap<AttrCombo, u32>,
) -> Result<PromptSpec> {
    let format_value = table
        .dimension(Dimension::Format)
        .ok_or_else(|| Error::Config("RPI table missing format dimension".into()))?
        .argmax()
        .to_string();
    let attrs_value = table
        .dimension(Dimension::Attrs)
        .ok_or_else(|| Error::Config("RPI table missing attrs dimension".into()))?
        .argmax()
        .to_string();
    let attrs: AttrCombo = attrs_value.parse()?;
    let letter = format_value.trim_start_matches('S');
    let format = SampleFormat::from_letter(letter)
        .ok_or_else(|| Error::BadSpecName(format_value.clone()))?;

    match table.approach {
        Approach::Sampling => {
            let size_value = table
                .dimension(Dimension::Size)
                .ok_or_else(|| Error::Config("sampling RPI table missing size dimension".into()))?
                .argmax()
                .to_string();
            let k: u32 = size_value
                .parse()
                .map_err(|_| Error::BadSpecName(size_value))?;
            Ok(PromptSpec::sampling(format, k, attrs))
        }
        Approach::Summarizing => {
            let k = *summary_sizes.get(&attrs).ok_or_else(|| {
                Error::Config(format!("no summary size configured for attrs {attrs}"))
            })?;
            Ok(PromptSpec::summarizing(format, k, attrs))
        }
    }
}

/// Which selection strategy produced an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "gs")]
    Gs,
    #[serde(rename = "rpi")]
    Rpi,
    #[serde(rename = "gs-star")]
    GsStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecScore {
    pub spec: String,
    pub val_ndcg: f64,
}

/// Cost accounting for the two GS* phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTierPhases {
    pub cheap_model: String,
    pub expensive_model: String,
    pub cheap_usd: f64,
    pub expensive_usd: f64,
    pub expensive_calls: u64,
    pub shortlist_scores: Vec<SpecScore>,
}

/// A selection decision with the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub strategy: Strategy,
    pub spec: PromptSpec,
    pub val_ndcg: f64,
    pub shortlist: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<TwoTierPhases>,
}

/// True if `a` should be preferred over `b`: higher accuracy, then fewer
/// estimated tokens when both are known, then canonical spec order.
fn better_pick(a: &PromptResult, b: &PromptResult) -> bool {
    if a.mean_ndcg != b.mean_ndcg {
        return a.mean_ndcg > b.mean_ndcg;
    }
    if let (Some(ta), Some(tb)) = (a.mean_prompt_tokens, b.mean_prompt_tokens) {
        if ta != tb {
            return ta < tb;
        }
    }
    a.spec < b.spec
}

/// Grid search: argmax validation accuracy over the shortlist (the whole
/// grid when none is given).
pub fn select_gs(
    grid: &ResultGrid,
    dataset: &str,
    shortlist: Option<&[PromptSpec]>,
) -> Result<SelectionOutcome> {
    let candidates: Vec<&PromptResult> = match shortlist {
        Some(specs) => {
            let mut out = Vec::with_capacity(specs.len());
            let mut missing = Vec::new();
            for spec in specs {
                match grid.get(dataset, spec) {
                    Some(r) => out.push(r),
                    None => missing.push(spec.name()),
                }
            }
            if !missing.is_empty() {
                return Err(Error::IncompleteGrid(missing));
            }
            out
        }
        None => grid.results_for(dataset).collect(),
    };
    let mut iter = candidates.into_iter();
    let mut best = iter.next().ok_or(Error::EmptyShortlist)?;
    let mut names = vec![best.spec.name()];
    for candidate in iter {
        names.push(candidate.spec.name());
        if better_pick(candidate, best) {
            best = candidate;
        }
    }
    names.sort();
    Ok(SelectionOutcome {
        strategy: Strategy::Gs,
        spec: best.spec,
        val_ndcg: best.mean_ndcg,
        shortlist: names,
        phases: None,
    })
}

/// RPI selection from already-built tables: assemble both approaches' best
/// combos, then keep whichever scores higher on the validation grid
/// (sampling wins exact ties).
pub fn select_rpi_from_tables(
    sampling: &RpiTable,
    summarizing: &RpiTable,
    grid: &ResultGrid,
    dataset: &str,
    summary_sizes: &BTreeMap<AttrCombo, u32>,
) -> Result<SelectionOutcome> {
    let sampling_combo = best_combo_from_rpi(sampling, summary_sizes)?;
    let summarizing_combo = best_combo_from_rpi(summarizing, summary_sizes)?;
    let lookup = |spec: &PromptSpec| -> Result<f64> {
        grid.get(dataset, spec)
            .map(|r| r.mean_ndcg)
            .ok_or_else(|| Error::IncompleteGrid(vec![spec.name()]))
    };
    let sampling_acc = lookup(&sampling_combo)?;
    let summarizing_acc = lookup(&summarizing_combo)?;
    let (spec, val_ndcg) = if summarizing_acc > sampling_acc {
        (summarizing_combo, summarizing_acc)
    } else {
        if summarizing_acc == sampling_acc && sampling_combo != summarizing_combo {
            eprintln!(
                "warn: RPI combos tie on validation ({} vs {}); keeping the sampling combo",
                sampling_combo.name(),
                summarizing_combo.name()
            );
        }
        (sampling_combo, sampling_acc)
    };
    Ok(SelectionOutcome {
        strategy: Strategy::Rpi,
        spec,
        val_ndcg,
        shortlist: vec![sampling_combo.name(), summarizing_combo.name()],
        phases: None,
    })
}

/// RPI selection computed from the validation grid itself.
pub fn select_rpi(
    grid: &ResultGrid,
    dataset: &str,
    summary_sizes: &BTreeMap<AttrCombo, u32>,
    mode: RpiMode,
) -> Result<SelectionOutcome> {
    let sampling = rpi_analysis(grid, dataset, Approach::Sampling, mode)?;
    let summarizing = rpi_analysis(grid, dataset, Approach::Summarizing, mode)?;
    select_rpi_from_tables(&sampling, &summarizing, grid, dataset, summary_sizes)
}

/// Baseline specs from earlier prompt work, re-evaluated by every selection
/// comparison: R-10-T, SR-100-T, E-30-T, L-10-T.
pub fn default_baselines() -> Vec<PromptSpec> {
    ["R-10-T", "SR-100-T", "E-30-T", "L-10-T"]
        .iter()
        .map(|s| s.parse().expect("valid baseline name"))
        .collect()
}

/// Two-tier GS*: search the grid with the cheap model, shortlist the
/// baselines plus the GS and RPI picks, re-evaluate only the shortlist with
/// the expensive profile on the validation instances, and keep the argmax.
///
/// `cheap_usd` is the already-spent search cost carried into the report; the
/// expensive phase's cost is measured here.
#[allow(clippy::too_many_arguments)]
pub fn select_two_tier(
    cheap_grid: &ResultGrid,
    cheap_model: &str,
    dataset: &str,
    baselines: &[PromptSpec],
    expensive_setup: &EvalSetup,
    instances: &[EvalInstance],
    summary_sizes: &BTreeMap<AttrCombo, u32>,
    mode: RpiMode,
    cheap_usd: f64,
    mut on_result: Option<ResultSink<'_>>,
) -> Result<SelectionOutcome> {
    let gs = select_gs(cheap_grid, dataset, None)?;
    let rpi = select_rpi(cheap_grid, dataset, summary_sizes, mode)?;

    let mut shortlist: Vec<PromptSpec> = baselines.to_vec();
    for pick in [gs.spec, rpi.spec] {
        if !shortlist.contains(&pick) {
            shortlist.push(pick);
        }
    }
    shortlist.sort_unstable();
    shortlist.dedup();

    let usd_before = expensive_setup.gateway.total_usd();
    let calls_before = expensive_setup.gateway.upstream_call_count();
    let mut evaluated: Vec<(String, f64)> = Vec::new();
    let mut best: Option<PromptResult> = None;
    let mut noop = |_: &EvalResult| Ok(());
    for spec in &shortlist {
        let sink: &mut dyn FnMut(&EvalResult) -> Result<()> = match on_result.as_deref_mut() {
            Some(f) => f,
            None => &mut noop,
        };
        let result = match evaluate_prompt(expensive_setup, dataset, spec, instances, sink) {
            Ok(r) => r,
            Err(cause) => {
                return Err(Error::TwoTierFailed {
                    evaluated,
                    cause: Box::new(cause),
                });
            }
        };
        evaluated.push((spec.name(), result.mean_ndcg));
        best = Some(match best.take() {
            Some(current) if better_pick(&current, &result) => current,
            _ => result,
        });
    }
    let best = best.ok_or(Error::EmptyShortlist)?;

    Ok(SelectionOutcome {
        strategy: Strategy::GsStar,
        spec: best.spec,
        val_ndcg: best.mean_ndcg,
        shortlist: shortlist.iter().map(|s| s.name()).collect(),
        phases: Some(TwoTierPhases {
            cheap_model: cheap_model.to_string(),
            expensive_model: expensive_setup.chat_profile.name.clone(),
            cheap_usd,
            expensive_usd: expensive_setup.gateway.total_usd() - usd_before,
            expensive_calls: expensive_setup.gateway.upstream_call_count() - calls_before,
            shortlist_scores: evaluated
                .iter()
                .map(|(spec, val_ndcg)| SpecScore {
                    spec: spec.clone(),
                    val_ndcg: *val_ndcg,
                })
                .collect(),
        }),
    })
}

// ---------------------------------------------------------------------------
// Table-layout CSV loaders (shared by the report round-trip and the fixture
// replay of published results).
// ---------------------------------------------------------------------------

/// RPI tables loaded from a table-layout CSV, one row per dataset, plus the
/// row's "prompt" column when present.
pub struct RpiTableFile {
    pub tables: BTreeMap<String, RpiTable>,
    pub prompts: BTreeMap<String, String>,
}

fn split_csv_line(line: &str) -> Vec<String> {
    line.split(',').map(|s| s.trim().to_string()).collect()
}

/// Load an RPI table CSV.
///
/// Sampling layout: `dataset,R,L,E,k5,...,T,C,TC,TD,CD,TCD[,prompt,ratio]`;
/// summarizing layout is the same without the k columns and with S-prefixed
/// format names.
pub fn load_rpi_table_csv(path: &Path, approach: Approach) -> Result<RpiTableFile> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = raw.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty file", path.display())))?;
    let columns = split_csv_line(header);

    let mut format_cols: Vec<(usize, String)> = Vec::new();
    let mut size_cols: Vec<(usize, String)> = Vec::new();
    let mut attr_cols: Vec<(usize, String)> = Vec::new();
    let mut prompt_col: Option<usize> = None;
    for (i, name) in columns.iter().enumerate() {
        if i == 0 || name == "ratio" {
            continue;
        }
        if name == "prompt" {
            prompt_col = Some(i);
        } else if matches!(name.as_str(), "R" | "L" | "E" | "SR" | "SL" | "SE") {
            format_cols.push((i, name.clone()));
        } else if name
            .strip_prefix('k')
            .is_some_and(|rest| rest.parse::<u32>().is_ok())
        {
            size_cols.push((i, name[1..].to_string()));
        } else if name.parse::<AttrCombo>().is_ok() {
            attr_cols.push((i, name.clone()));
        } else {
            return Err(Error::Config(format!(
                "{}: unknown column `{name}`",
                path.display()
            )));
        }
    }

    let mut tables = BTreeMap::new();
    let mut prompts = BTreeMap::new();
    for line in lines {
        let fields = split_csv_line(line);
        if fields.len() < columns.len().min(2) {
            return Err(Error::Config(format!(
                "{}: short row `{line}`",
                path.display()
            )));
        }
        let dataset = fields[0].clone();
        let parse_cells = |cols: &[(usize, String)]| -> Result<Vec<(String, f64)>> {
            cols.iter()
                .map(|(idx, name)| {
                    let value: f64 = fields
                        .get(*idx)
                        .and_then(|f| f.parse().ok())
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "{}: bad value for {name} in `{line}`",
                                path.display()
                            ))
                        })?;
                    Ok((name.clone(), value))
                })
                .collect()
        };
        let mut dimensions = vec![DimensionRpi {
            dimension: Dimension::Format,
            values: parse_cells(&format_cols)?,
        }];
        if approach == Approach::Sampling {
            dimensions.push(DimensionRpi {
                dimension: Dimension::Size,
                values: parse_cells(&size_cols)?,
            });
        }
        dimensions.push(DimensionRpi {
            dimension: Dimension::Attrs,
            values: parse_cells(&attr_cols)?,
        });
        if let Some(idx) = prompt_col {
            if let Some(prompt) = fields.get(idx) {
                prompts.insert(dataset.clone(), prompt.clone());
            }
        }
        tables.insert(
            dataset,
            RpiTable {
                approach,
                dimensions,
            },
        );
    }
    Ok(RpiTableFile { tables, prompts })
}

/// Load a `dataset,spec,ndcg` CSV into a summary-only result grid.
pub fn load_grid_csv(path: &Path) -> Result<ResultGrid> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut grid = ResultGrid::new();
    for (i, line) in raw.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() < 3 {
            return Err(Error::Config(format!(
                "{}: short row `{line}`",
                path.display()
            )));
        }
        let spec: PromptSpec = fields[1].parse()?;
        let ndcg: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad ndcg in `{line}`", path.display())))?;
        grid.insert(PromptResult::summary(&fields[0], spec, ndcg));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(entries: &[(&str, &str, f64)]) -> ResultGrid {
        let mut grid = ResultGrid::new();
        for (dataset, spec, acc) in entries {
            grid.insert(PromptResult::summary(dataset, spec.parse().unwrap(), *acc));
        }
        grid
    }

    /// 2x2 factorial: formats X=R, Y=L over sizes a=5, b=10 (attrs fixed).
    fn two_by_two() -> ResultGrid {
        grid_from(&[
            ("d", "R-5-T", 0.4),
            ("d", "R-10-T", 0.5),
            ("d", "L-5-T", 0.2),
            ("d", "L-10-T", 0.25),
        ])
    }

    #[test]
    fn rpi_hand_example() {
        let grid = two_by_two();
        let rpi = compute_rpi(&grid, "d", Approach::Sampling, Dimension::Format, RpiMode::Pairwise)
            .unwrap();
        let by_name: BTreeMap<&str, f64> = rpi.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        assert_eq!(by_name["R"], 100.0);
        assert_eq!(by_name["L"], -50.0);
    }

    #[test]
    fn rpi_equal_grid_is_zero() {
        let grid = grid_from(&[
            ("d", "R-5-T", 0.4),
            ("d", "R-10-T", 0.4),
            ("d", "L-5-T", 0.4),
            ("d", "L-10-T", 0.4),
        ]);
        for dim in [Dimension::Format, Dimension::Size, Dimension::Attrs] {
            let rpi = compute_rpi(&grid, "d", Approach::Sampling, dim, RpiMode::Pairwise).unwrap();
            for (name, value) in rpi {
                assert!(value.abs() < 1e-12, "{name} -> {value}");
            }
        }
    }

    #[test]
    fn rpi_averaging_modes_agree_on_single_alternatives() {
        // With one alternative per context the two conventions coincide.
        let grid = two_by_two();
        for dim in [Dimension::Format, Dimension::Size] {
            let a = compute_rpi(&grid, "d", Approach::Sampling, dim, RpiMode::Pairwise).unwrap();
            let b = compute_rpi(&grid, "d", Approach::Sampling, dim, RpiMode::RatioToMeanOfOthers)
                .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rpi_averaging_modes_differ_with_multiple_alternatives() {
        // Three formats: pairwise averages ratios, the other convention
        // divides by the mean of the alternatives; Jensen's inequality
        // separates them whenever the alternatives differ.
        let grid = grid_from(&[
            ("d", "R-5-T", 0.6),
            ("d", "L-5-T", 0.2),
            ("d", "E-5-T", 0.4),
        ]);
        let pairwise =
            compute_rpi(&grid, "d", Approach::Sampling, Dimension::Format, RpiMode::Pairwise)
                .unwrap();
        let to_mean = compute_rpi(
            &grid,
            "d",
            Approach::Sampling,
            Dimension::Format,
            RpiMode::RatioToMeanOfOthers,
        )
        .unwrap();
        // R against {0.2, 0.4}: pairwise mean(3.0, 1.5) = 2.25; vs-mean 0.6/0.3 = 2.0.
        assert!((pairwise[0].1 - 125.0).abs() < 1e-9, "{:?}", pairwise);
        assert!((to_mean[0].1 - 100.0).abs() < 1e-9, "{:?}", to_mean);
        // Both conventions keep the same argmax here and under scaling.
        let scaled = grid_from(&[
            ("d", "R-5-T", 0.6 * 3.0),
            ("d", "L-5-T", 0.2 * 3.0),
            ("d", "E-5-T", 0.4 * 3.0),
        ]);
        let scaled_to_mean = compute_rpi(
            &scaled,
            "d",
            Approach::Sampling,
            Dimension::Format,
            RpiMode::RatioToMeanOfOthers,
        )
        .unwrap();
        for ((_, x), (_, y)) in to_mean.iter().zip(&scaled_to_mean) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rpi_is_scale_invariant() {
        let base = two_by_two();
        let scaled = grid_from(&[
            ("d", "R-5-T", 0.4 * 1.7),
            ("d", "R-10-T", 0.5 * 1.7),
            ("d", "L-5-T", 0.2 * 1.7),
            ("d", "L-10-T", 0.25 * 1.7),
        ]);
        for dim in [Dimension::Format, Dimension::Size] {
            let a = compute_rpi(&base, "d", Approach::Sampling, dim, RpiMode::Pairwise).unwrap();
            let b = compute_rpi(&scaled, "d", Approach::Sampling, dim, RpiMode::Pairwise).unwrap();
            for ((_, x), (_, y)) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rpi_missing_cell_is_reported() {
        let grid = grid_from(&[
            ("d", "R-5-T", 0.4),
            ("d", "R-10-T", 0.5),
            ("d", "L-5-T", 0.2),
        ]);
        let err =
            compute_rpi(&grid, "d", Approach::Sampling, Dimension::Format, RpiMode::Pairwise)
                .unwrap_err();
        match err {
            Error::IncompleteGrid(missing) => assert_eq!(missing, vec!["L-10-T"]),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn rpi_zero_denominator_is_an_error() {
        let grid = grid_from(&[
            ("d", "R-5-T", 0.4),
            ("d", "R-10-T", 0.5),
            ("d", "L-5-T", 0.0),
            ("d", "L-10-T", 0.25),
        ]);
        assert!(matches!(
            compute_rpi(&grid, "d", Approach::Sampling, Dimension::Format, RpiMode::Pairwise),
            Err(Error::ZeroAccuracy(_))
        ));
    }

    #[test]
    fn best_combo_monotone_dimension() {
        // Accuracy strictly increasing in k, constant elsewhere.
        let mut entries = Vec::new();
        for (fi, f) in ["R", "L", "E"].iter().enumerate() {
            for (ki, k) in [5, 10, 20, 30].iter().enumerate() {
                for a in ["T", "C"] {
                    entries.push((
                        "d".to_string(),
                        format!("{f}-{k}-{a}"),
                        0.3 + 0.1 * ki as f64 + 0.0 * fi as f64,
                    ));
                }
            }
        }
        let mut grid = ResultGrid::new();
        for (d, s, v) in &entries {
            grid.insert(PromptResult::summary(d, s.parse().unwrap(), *v));
        }
        let table = rpi_analysis(&grid, "d", Approach::Sampling, RpiMode::Pairwise).unwrap();
        let size = table.dimension(Dimension::Size).unwrap();
        for pair in size.values.windows(2) {
            assert!(pair[0].1 < pair[1].1, "size RPI should increase: {pair:?}");
        }
        let combo = best_combo_from_rpi(&table, &BTreeMap::new()).unwrap();
        assert_eq!(combo.k, 30);
    }

    #[test]
    fn gs_picks_the_argmax() {
        let grid = two_by_two();
        let outcome = select_gs(&grid, "d", None).unwrap();
        assert_eq!(outcome.spec.name(), "R-10-T");
        assert_eq!(outcome.val_ndcg, 0.5);
        assert_eq!(outcome.shortlist.len(), 4);
    }

    #[test]
    fn gs_singleton_shortlist() {
        let grid = two_by_two();
        let spec: PromptSpec = "L-5-T".parse().unwrap();
        let outcome = select_gs(&grid, "d", Some(&[spec])).unwrap();
        assert_eq!(outcome.spec, spec);
        assert_eq!(outcome.val_ndcg, 0.2);
    }

    #[test]
    fn gs_tie_breaks_canonically() {
        let grid = grid_from(&[("d", "L-10-T", 0.5), ("d", "R-10-T", 0.5)]);
        let outcome = select_gs(&grid, "d", Some(&["L-10-T".parse().unwrap(), "R-10-T".parse().unwrap()]))
            .unwrap();
        // Canonical order puts Random before Latest.
        assert_eq!(outcome.spec.name(), "R-10-T");
    }

    #[test]
    fn gs_prefers_cheaper_prompts_on_accuracy_ties() {
        let mut grid = ResultGrid::new();
        let mut cheap = PromptResult::summary("d", "L-30-T".parse().unwrap(), 0.5);
        cheap.mean_prompt_tokens = Some(900.0);
        let mut pricey = PromptResult::summary("d", "R-10-T".parse().unwrap(), 0.5);
        pricey.mean_prompt_tokens = Some(1500.0);
        grid.insert(cheap);
        grid.insert(pricey);
        let outcome = select_gs(&grid, "d", None).unwrap();
        assert_eq!(outcome.spec.name(), "L-30-T", "fewer estimated tokens wins the tie");
    }

    #[test]
    fn rpi_selection_tie_goes_to_sampling() {
        let grid = grid_from(&[
            ("d", "R-5-T", 0.4),
            ("d", "R-10-T", 0.5),
            ("d", "L-5-T", 0.2),
            ("d", "L-10-T", 0.25),
            ("d", "SR-30-T", 0.5), // ties the sampling combo exactly
            ("d", "SL-30-T", 0.3),
        ]);
        let mut summary_sizes = BTreeMap::new();
        summary_sizes.insert(AttrCombo::T, 30);
        let outcome = select_rpi(&grid, "d", &summary_sizes, RpiMode::Pairwise).unwrap();
        assert_eq!(outcome.spec.name(), "R-10-T");
    }

    #[test]
    fn rpi_selection_takes_the_better_combo() {
        // Sampling factorial 2x2 plus a summarizing factorial (sizes tied).
        let grid = grid_from(&[
            ("d", "R-5-T", 0.4),
            ("d", "R-10-T", 0.5),
            ("d", "L-5-T", 0.2),
            ("d", "L-10-T", 0.25),
            ("d", "SR-30-T", 0.6),
            ("d", "SL-30-T", 0.3),
        ]);
        let mut summary_sizes = BTreeMap::new();
        summary_sizes.insert(AttrCombo::T, 30);
        let outcome = select_rpi(&grid, "d", &summary_sizes, RpiMode::Pairwise).unwrap();
        // Sampling combo R-10-T scores 0.5; summarizing combo SR-30-T scores 0.6.
        assert_eq!(outcome.spec.name(), "SR-30-T");
        assert_eq!(outcome.shortlist, vec!["R-10-T".to_string(), "SR-30-T".to_string()]);
    }
}
