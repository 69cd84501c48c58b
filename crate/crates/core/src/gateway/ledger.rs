//! Call records and cost aggregation.

use serde::{Deserialize, Serialize};

/// How a call ended. `ParseReject` is set after the fact when the protocol
/// layer could not extract a ranking from an otherwise successful response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok,
    TransportError,
    ParseReject,
}

/// Where the token counts came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSource {
    /// Usage metadata reported by the endpoint.
    Endpoint,
    /// Local estimator fallback.
    Estimated,
}

/// One ledger entry. Cached hits are recorded with zero tokens and zero cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallRecord {
    pub model: String,
    pub dataset: String,
    pub spec: String,
    pub prompt_sha256: String,
    pub attempt: u32,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency_ms: u64,
    pub cost_usd: f64,
    pub outcome: CallOutcome,
    pub cached: bool,
    pub token_source: TokenSource,
}

impl CallRecord {
    /// cost = tokens_in * price_in / 1e6 + tokens_out * price_out / 1e6.
    pub fn compute_cost(tokens_in: u64, tokens_out: u64, price_in: f64, price_out: f64) -> f64 {
        tokens_in as f64 * price_in / 1e6 + tokens_out as f64 * price_out / 1e6
    }
}

/// Per-(dataset, spec) cost breakdown row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostBreakdownRow {
    pub dataset: String,
    pub spec: String,
    pub calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub usd: f64,
}

/// Aggregated view of a ledger. Totals always equal the sum over records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub total_calls: u64,
    pub cached_calls: u64,
    pub transport_errors: u64,
    pub parse_rejects: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub total_usd: f64,
    pub wall_clock_ms: u64,
    pub by_dataset_spec: Vec<CostBreakdownRow>,
}

/// Aggregate records into a report.
pub fn cost_report(records: &[CallRecord], wall_clock_ms: u64) -> CostReport {
    use std::collections::BTreeMap;
    let mut by_key: BTreeMap<(String, String), CostBreakdownRow> = BTreeMap::new();
    let mut report = CostReport {
        total_calls: 0,
        cached_calls: 0,
        transport_errors: 0,
        parse_rejects: 0,
        tokens_in: 0,
        tokens_out: 0,
        total_usd: 0.0,
        wall_clock_ms,
        by_dataset_spec: Vec::new(),
    };
    for record in records {
        report.total_calls += 1;
        if record.cached {
            report.cached_calls += 1;
        }
        match record.outcome {
            CallOutcome::TransportError => report.transport_errors += 1,
            CallOutcome::ParseReject => report.parse_rejects += 1,
            CallOutcome::Ok => {}
        }
        report.tokens_in += record.tokens_in;
        report.tokens_out += record.tokens_out;
        report.total_usd += record.cost_usd;

        let row = by_key
            .entry((record.dataset.clone(), record.spec.clone()))
            .or_insert_with(|| CostBreakdownRow {
                dataset: record.dataset.clone(),
                spec: record.spec.clone(),
                calls: 0,
                tokens_in: 0,
                tokens_out: 0,
                usd: 0.0,
            });
        row.calls += 1;
        row.tokens_in += record.tokens_in;
        row.tokens_out += record.tokens_out;
        row.usd += record.cost_usd;
    }
    report.by_dataset_spec = by_key.into_values().collect();
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(tokens_in: u64, tokens_out: u64, cost: f64, cached: bool) -> CallRecord {
        CallRecord {
            model: "m".into(),
            dataset: "d".into(),
            spec: "R-10-T".into(),
            prompt_sha256: "x".into(),
            attempt: 1,
            tokens_in,
            tokens_out,
            latency_ms: 1,
            cost_usd: cost,
            outcome: CallOutcome::Ok,
            cached,
            token_source: TokenSource::Estimated,
        }
    }

    #[test]
    fn empty_ledger_is_all_zero() {
        let report = cost_report(&[], 0);
        assert_eq!(report.total_calls, 0);
        assert_eq!(report.tokens_in, 0);
        assert_eq!(report.total_usd, 0.0);
        assert!(report.by_dataset_spec.is_empty());
    }

    #[test]
    fn cost_arithmetic() {
        // 2 calls of (1000 in, 100 out) at (0.15, 0.60) USD per 1M tokens.
        let cost = CallRecord::compute_cost(1000, 100, 0.15, 0.60);
        let records = vec![record(1000, 100, cost, false), record(1000, 100, cost, false)];
        let report = cost_report(&records, 5);
        assert!((report.total_usd - 0.00042).abs() < 1e-12);
        assert_eq!(report.tokens_in, 2000);
        assert_eq!(report.tokens_out, 200);
    }

    #[test]
    fn cached_hits_cost_zero() {
        let records = vec![record(1000, 100, 0.1, false), record(0, 0, 0.0, true)];
        let report = cost_report(&records, 0);
        assert_eq!(report.cached_calls, 1);
        assert!((report.total_usd - 0.1).abs() < 1e-12);
    }
}
