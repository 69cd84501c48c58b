//! CSV and markdown renderings of statistics, RPI tables, selections, and
//! costs. Every markdown report cites the manifest run id it was generated
//! from, and rendering is deterministic so regeneration from unchanged
//! results is byte-identical.

use std::collections::BTreeMap;

use crate::catalog::DatasetStats;
use crate::error::Result;
use crate::gateway::CostReport;
use crate::metrics::ResultGrid;
use crate::promptgrid::{Approach, AttrCombo};
use crate::selector::{best_combo_from_rpi, Dimension, RpiTable, SelectionOutcome};

/// Round half-up to one decimal (the convention used for ratio columns).
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn footer(run_id: &str) -> String {
    format!("\ngenerated from manifest {run_id}\n")
}

pub fn stats_csv(rows: &[(String, DatasetStats)]) -> String {
    let mut out = String::from(
        "dataset,title_le5,title_ge10,title_dup,category_le1,category_ge3,category_dup,desc_eq0,desc_le5,desc_ge50,users_ge50,users_ge100\n",
    );
    for (name, s) in rows {
        out.push_str(&format!(
            "{name},{:.1},{:.1},{:.1},{:.1},{:.1},{:.1},{:.1},{:.1},{:.1},{},{}\n",
            s.title_le5_pct,
            s.title_ge10_pct,
            s.title_dup_pct,
            s.category_le1_pct,
            s.category_ge3_pct,
            s.category_dup_pct,
            s.desc_eq0_pct,
            s.desc_le5_pct,
            s.desc_ge50_pct,
            s.users_ge50,
            s.users_ge100,
        ));
    }
    out
}

pub fn stats_markdown(rows: &[(String, DatasetStats)], run_id: &str) -> String {
    let mut out = String::from("# Dataset statistics\n\n");
    out.push_str("| | Title <=5 | Title >=10 | Title Dup | Cat <=1 | Cat >=3 | Cat Dup | Desc =0 | Desc <=5 | Desc >=50 | Users >=50 | Users >=100 |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for (name, s) in rows {
        out.push_str(&format!(
            "| {name} | {:.1} | {:.1} | {:.1} | {:.1} | {:.1} | {:.1} | {:.1} | {:.1} | {:.1} | {} | {} |\n",
            s.title_le5_pct,
            s.title_ge10_pct,
            s.title_dup_pct,
            s.category_le1_pct,
            s.category_ge3_pct,
            s.category_dup_pct,
            s.desc_eq0_pct,
            s.desc_le5_pct,
            s.desc_ge50_pct,
            s.users_ge50,
            s.users_ge100,
        ));
    }
    out.push_str(&footer(run_id));
    out
}

/// Best-combo prompt and its accuracy ratio to the grid's best prompt,
/// appended as the trailing `prompt,ratio` columns.
fn combo_and_ratio(
    table: &RpiTable,
    grid: &ResultGrid,
    dataset: &str,
    summary_sizes: &BTreeMap<AttrCombo, u32>,
) -> Result<(String, Option<f64>)> {
    let combo = best_combo_from_rpi(table, summary_sizes)?;
    let combo_acc = grid.get(dataset, &combo).map(|r| r.mean_ndcg);
    let best_acc = grid
        .results_for(dataset)
        .map(|r| r.mean_ndcg)
        .fold(f64::NEG_INFINITY, f64::max);
    let ratio = match combo_acc {
        Some(acc) if best_acc > 0.0 => Some(round1(100.0 * acc / best_acc)),
        _ => None,
    };
    Ok((combo.name(), ratio))
}

/// One row per dataset in the Table 3/4 layout. When `grid` is given, the
/// trailing prompt/ratio columns are included.
pub fn rpi_csv(
    tables: &BTreeMap<String, RpiTable>,
    grid: Option<&ResultGrid>,
    summary_sizes: &BTreeMap<AttrCombo, u32>,
) -> Result<String> {
    let mut header: Vec<String> = vec!["dataset".into()];
    let mut first = true;
    let mut out = String::new();
    for (dataset, table) in tables {
        let mut fields: Vec<String> = vec![dataset.clone()];
        for dim in &table.dimensions {
            for (name, value) in &dim.values {
                if first {
                    let column = match dim.dimension {
                        Dimension::Size => format!("k{name}"),
                        _ => name.clone(),
                    };
                    header.push(column);
                }
                fields.push(format!("{value:.6}"));
            }
        }
        if let Some(grid) = grid {
            if first {
                header.push("prompt".into());
                header.push("ratio".into());
            }
            let (prompt, ratio) = combo_and_ratio(table, grid, dataset, summary_sizes)?;
            fields.push(prompt);
            fields.push(ratio.map(|r| format!("{r:.1}")).unwrap_or_default());
        }
        if first {
            out.push_str(&header.join(","));
            out.push('\n');
            first = false;
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn rpi_markdown(
    tables: &BTreeMap<String, RpiTable>,
    approach: Approach,
    grid: Option<&ResultGrid>,
    summary_sizes: &BTreeMap<AttrCombo, u32>,
    run_id: &str,
) -> Result<String> {
    let title = match approach {
        Approach::Sampling => "# RPI: sampling prompts\n\n",
        Approach::Summarizing => "# RPI: summarizing prompts\n\n",
    };
    let mut out = String::from(title);
    let mut first = true;
    for (dataset, table) in tables {
        if first {
            let mut header = vec!["".to_string()];
            for dim in &table.dimensions {
                for (name, _) in &dim.values {
                    header.push(name.clone());
                }
            }
            if grid.is_some() {
                header.push("Prompt".into());
                header.push("Ratio".into());
            }
            out.push_str(&format!("|{}|\n", header.join("|")));
            out.push_str(&format!("|{}|\n", vec!["---"; header.len()].join("|")));
            first = false;
        }
        let mut fields = vec![dataset.clone()];
        for dim in &table.dimensions {
            let argmax = dim.argmax().to_string();
            for (name, value) in &dim.values {
                let cell = format!("{:.1}", round1(*value));
                if *name == argmax {
                    fields.push(format!("**{cell}**"));
                } else {
                    fields.push(cell);
                }
            }
        }
        if let Some(grid) = grid {
            let (prompt, ratio) = combo_and_ratio(table, grid, dataset, summary_sizes)?;
            fields.push(prompt);
            fields.push(ratio.map(|r| format!("{r:.1}")).unwrap_or_default());
        }
        out.push_str(&format!("|{}|\n", fields.join("|")));
    }
    out.push_str(&footer(run_id));
    Ok(out)
}

/// One selection-table row: the method label and its per-dataset
/// (spec, accuracy) cells.
pub type SelectionRow = (String, BTreeMap<String, (String, f64)>);

/// Selection table in the published layout: methods as rows, datasets as
/// columns, best value per column bold and runner-up underlined.
pub fn selection_markdown(
    datasets: &[String],
    rows: &[SelectionRow],
    outcomes: &[(String, SelectionOutcome)],
    run_id: &str,
) -> String {
    let mut out = String::from("# Prompt selection\n\n");
    out.push_str(&format!("| | {} |\n", datasets.join(" | ")));
    out.push_str(&format!("|---|{}\n", "---|".repeat(datasets.len())));

    // Rank per column for bold/underline markers.
    let mut column_values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for dataset in datasets {
        let mut values: Vec<f64> = rows
            .iter()
            .filter_map(|(_, cells)| cells.get(dataset).map(|(_, v)| *v))
            .collect();
        values.sort_by(|a, b| b.total_cmp(a));
        column_values.insert(dataset, values);
    }

    for (method, cells) in rows {
        let mut line = format!("| {method} |");
        for dataset in datasets {
            match cells.get(dataset) {
                Some((spec, value)) => {
                    let ranked = &column_values[dataset.as_str()];
                    let formatted = format!("{value:.3}");
                    let decorated = if !ranked.is_empty() && *value == ranked[0] {
                        format!("**{formatted}**")
                    } else if ranked.len() > 1 && *value == ranked[1] {
                        format!("<u>{formatted}</u>")
                    } else {
                        formatted
                    };
                    if spec.is_empty() {
                        line.push_str(&format!(" {decorated} |"));
                    } else {
                        line.push_str(&format!(" {decorated}<br>{spec} |"));
                    }
                }
                None => line.push_str(" |"),
            }
        }
        out.push_str(&line);
        out.push('\n');
    }

    for (dataset, outcome) in outcomes {
        out.push_str(&format!(
            "\n- {dataset}: strategy {} picked `{}` (validation nDCG {:.4}; shortlist {})\n",
            match outcome.strategy {
                crate::selector::Strategy::Gs => "GS",
                crate::selector::Strategy::Rpi => "RPI",
                crate::selector::Strategy::GsStar => "GS*",
            },
            outcome.spec.name(),
            outcome.val_ndcg,
            outcome.shortlist.join(", "),
        ));
        if let Some(phases) = &outcome.phases {
            out.push_str(&format!(
                "  - phases: cheap search {:.4} USD ({}), expensive re-ranking {:.4} USD ({} calls, {})\n",
                phases.cheap_usd,
                phases.cheap_model,
                phases.expensive_usd,
                phases.expensive_calls,
                phases.expensive_model,
            ));
        }
    }
    out.push_str(&footer(run_id));
    out
}

pub fn cost_markdown(report: &CostReport, run_id: &str) -> String {
    let mut out = String::from("# Cost report\n\n");
    out.push_str(&format!(
        "- calls: {} ({} cached, {} transport errors, {} parse rejects)\n",
        report.total_calls, report.cached_calls, report.transport_errors, report.parse_rejects
    ));
    out.push_str(&format!(
        "- tokens: {} in / {} out\n- cost: {:.4} USD\n- time: {:.1} s\n\n",
        report.tokens_in,
        report.tokens_out,
        report.total_usd,
        report.wall_clock_ms as f64 / 1000.0
    ));
    out.push_str("| dataset | spec | calls | tokens in | tokens out | USD |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for row in &report.by_dataset_spec {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.6} |\n",
            row.dataset, row.spec, row.calls, row.tokens_in, row.tokens_out, row.usd
        ));
    }
    out.push_str(&footer(run_id));
    out
}
