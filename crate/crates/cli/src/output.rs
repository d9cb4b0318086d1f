//! Result emission: a fixed-schema CSV and a JSON document that round-trips
//! through strict schema validation. Formatting is deterministic, so files
//! are bit-stable for a fixed (config, seed, build).

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use hetsim_core::error::{Error, Result};
use hetsim_core::metrics::RunMetrics;
use hetsim_core::sweep::SweepRow;

pub const CSV_HEADER: &str = "n,alpha,lambda,b,policy,profile,seed,metric,estimate,stderr,method";

/// Row provenance shared by every metric of one run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ResultsMeta {
    pub n: usize,
    pub alpha: Option<f64>,
    pub lambda: f64,
    pub b: usize,
    pub policy: String,
    pub profile: String,
    pub seed: u64,
    pub method: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MetricRow {
    pub metric: String,
    pub estimate: f64,
    pub stderr: f64,
}

/// The JSON results document.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ResultsDoc {
    pub meta: ResultsMeta,
    pub results: Vec<MetricRow>,
}

/// Strict parse of a results JSON document; unknown fields are rejected.
pub fn validate_results_json(text: &str) -> Result<ResultsDoc> {
    serde_json::from_str(text).map_err(|e| Error::config(format!("results schema: {e}")))
}

/// Flattens run metrics into named rows.
pub fn metric_rows(m: &RunMetrics) -> Vec<MetricRow> {
    let mut rows = vec![
        MetricRow { metric: "p_wait".into(), estimate: m.p_wait.value, stderr: m.p_wait.stderr },
        MetricRow {
            metric: "p_block".into(),
            estimate: m.p_block.value,
            stderr: m.p_block.stderr,
        },
        MetricRow {
            metric: "mean_wait".into(),
            estimate: m.mean_wait.value,
            stderr: m.mean_wait.stderr,
        },
        MetricRow {
            metric: "mean_qbar".into(),
            estimate: m.mean_qbar.value,
            stderr: m.mean_qbar.stderr,
        },
        MetricRow {
            metric: "mean_qwait".into(),
            estimate: m.mean_qwait.value,
            stderr: m.mean_qwait.stderr,
        },
    ];
    for (r, est) in &m.clipped_moments {
        rows.push(MetricRow { metric: format!("h{r}"), estimate: est.value, stderr: est.stderr });
        if let Some(eta) = m.clipped_eta.get(r) {
            rows.push(MetricRow { metric: format!("h{r}_eta"), estimate: *eta, stderr: 0.0 });
        }
    }
    for (probe, est) in &m.event_occupancy {
        rows.push(MetricRow {
            metric: format!("probe:{probe}"),
            estimate: est.value,
            stderr: est.stderr,
        });
    }
    for (name, count) in [
        ("arrivals", m.counts.arrivals),
        ("admitted", m.counts.admitted),
        ("blocked", m.counts.blocked),
        ("departures", m.counts.departures),
    ] {
        rows.push(MetricRow { metric: name.into(), estimate: count as f64, stderr: 0.0 });
    }
    rows
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV line per metric row under the fixed header.
pub fn csv_string(meta: &ResultsMeta, rows: &[MetricRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            meta.n,
            fmt_opt(meta.alpha),
            meta.lambda,
            meta.b,
            meta.policy,
            meta.profile,
            meta.seed,
            row.metric,
            row.estimate,
            row.stderr,
            meta.method
        );
    }
    out
}

/// Sweep table under the same schema, one block of rows per point.
pub fn sweep_csv_string(rows: &[SweepRow], method: &str) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let Some(metrics) = &row.metrics else { continue };
        for mr in metric_rows(metrics) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                row.point.n,
                row.point.alpha,
                row.point.lambda,
                row.point.buffer_b,
                row.point.policy,
                row.point.profile,
                row.point.seed,
                mr.metric,
                mr.estimate,
                mr.stderr,
                method
            );
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))
}

pub fn json_string<T: Serialize>(doc: &T) -> Result<String> {
    serde_json::to_string_pretty(doc)
        .map_err(|e| Error::config(format!("json serialization: {e}")))
}
