//! Report artifacts: metrics.json, examples.jsonl, the accumulated
//! method-by-model table, scatter sources for decisiveness-vs-confidence
//! plots, and the run metadata file.
//!
//! Everything except run-meta.json is byte-deterministic for a given config
//! and cache: accumulated CSVs are rewritten fully sorted by key, so the
//! result does not depend on the order runs were executed in.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use faithcheck_core::harness::{collect_scores, ExampleOutcome, MethodRun};
use faithcheck_core::metrics::{compensated_mean, MetricsReport};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetricsEntry {
    pub run_index: usize,
    pub mfg: f64,
    pub cmfg: f64,
    pub bin_means: Vec<Option<f64>>,
    pub bin_counts: Vec<usize>,
    pub n_total: usize,
    pub n_punted: usize,
    pub n_unscorable: usize,
    pub punt_rate: f64,
    pub mean_decisiveness: f64,
    pub mean_confidence: f64,
    pub sample_punt_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanBlock {
    pub mfg: f64,
    pub cmfg: f64,
    pub punt_rate: f64,
}

/// The metrics.json document. For multi-run methods the `mean` block is the
/// unweighted mean over runs; otherwise it mirrors the single run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub dataset: String,
    pub method: String,
    pub model: String,
    pub seed: u64,
    pub k: usize,
    pub runs: Vec<RunMetricsEntry>,
    pub mean: MeanBlock,
}

pub fn summarize(
    dataset: &str,
    method: &str,
    model: &str,
    seed: u64,
    k: usize,
    runs: &[MethodRun],
) -> Result<MetricsDocument> {
    let mut entries = Vec::with_capacity(runs.len());
    for run in runs {
        let (scores, n_unscorable) = collect_scores(&run.examples);
        let report = MetricsReport::compute(&scores)
            .with_context(|| format!("run {} metrics", run.run_index))?;
        let mut decs = Vec::new();
        let mut confs = Vec::new();
        let mut sample_punt_rates = Vec::new();
        for example in &run.examples {
            if let ExampleOutcome::Scored(s) = &example.outcome {
                decs.push(s.mean_decisiveness);
                confs.push(s.mean_confidence);
                sample_punt_rates.push(s.sample_punt_rate);
            }
        }
        entries.push(RunMetricsEntry {
            run_index: run.run_index,
            mfg: report.mfg,
            cmfg: report.cmfg,
            bin_means: report.bin_means.clone(),
            bin_counts: report.bin_counts.clone(),
            n_total: report.n_total,
            n_punted: report.n_punted,
            n_unscorable,
            punt_rate: report.punt_rate,
            mean_decisiveness: compensated_mean(decs.iter().copied()).unwrap_or(0.0),
            mean_confidence: compensated_mean(confs.iter().copied()).unwrap_or(0.0),
            sample_punt_rate: compensated_mean(sample_punt_rates.iter().copied()).unwrap_or(0.0),
        });
    }
    let mean = MeanBlock {
        mfg: compensated_mean(entries.iter().map(|e| e.mfg)).unwrap_or(0.0),
        cmfg: compensated_mean(entries.iter().map(|e| e.cmfg)).unwrap_or(0.0),
        punt_rate: compensated_mean(entries.iter().map(|e| e.punt_rate)).unwrap_or(0.0),
    };
    Ok(MetricsDocument {
        dataset: dataset.into(),
        method: method.into(),
        model: model.into(),
        seed,
        k,
        runs: entries,
        mean,
    })
}

pub fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

// --- tiny CSV layer -------------------------------------------------------

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn csv_line(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| csv_escape(f))
        .collect::<Vec<_>>()
        .join(",")
}

/// Parse one CSV line with double-quote escaping.
fn parse_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes => {
                if chars.peek() == Some(&'"') {
                    current.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            }
            '"' => in_quotes = true,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut current));
            }
            other => current.push(other),
        }
    }
    fields.push(current);
    fields
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Upsert rows into a keyed CSV: existing rows with other keys survive, rows
/// with matching keys are replaced, and the file is rewritten sorted by key.
/// Accumulation is therefore commutative across run order.
fn upsert_csv(
    path: &Path,
    header: &[&str],
    key_width: usize,
    new_rows: Vec<Vec<String>>,
) -> Result<()> {
    let mut rows: BTreeMap<Vec<String>, Vec<String>> = BTreeMap::new();
    if path.exists() {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let fields = parse_csv_line(line);
            if fields.len() != header.len() {
                anyhow::bail!(
                    "{}: row {} has {} fields, expected {}",
                    path.display(),
                    i + 1,
                    fields.len(),
                    header.len()
                );
            }
            rows.insert(fields[..key_width].to_vec(), fields);
        }
    }
    for row in new_rows {
        debug_assert_eq!(row.len(), header.len());
        rows.insert(row[..key_width].to_vec(), row);
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows.values() {
        out.push_str(&csv_line(row));
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

const TABLE_HEADER: &[&str] = &[
    "dataset",
    "method",
    "model",
    "n_total",
    "n_punted",
    "n_unscorable",
    "punt_rate",
    "mfg",
    "cmfg",
];

/// Method-by-model grid, one row per (dataset, method, model); multi-run
/// methods contribute their mean.
pub fn upsert_table_csv(path: &Path, doc: &MetricsDocument) -> Result<()> {
    let n_total: usize = doc.runs.iter().map(|r| r.n_total).sum();
    let n_punted: usize = doc.runs.iter().map(|r| r.n_punted).sum();
    let n_unscorable: usize = doc.runs.iter().map(|r| r.n_unscorable).sum();
    let row = vec![
        doc.dataset.clone(),
        doc.method.clone(),
        doc.model.clone(),
        n_total.to_string(),
        n_punted.to_string(),
        n_unscorable.to_string(),
        fmt(doc.mean.punt_rate),
        fmt(doc.mean.mfg),
        fmt(doc.mean.cmfg),
    ];
    upsert_csv(path, TABLE_HEADER, 3, vec![row])
}

const MEANS_HEADER: &[&str] = &[
    "dataset",
    "method",
    "model",
    "run_index",
    "mean_confidence",
    "mean_decisiveness",
    "n_scored",
];

/// Mean decisiveness vs mean confidence per run (scatter source for
/// comparing elicitation methods).
pub fn upsert_means_csv(path: &Path, doc: &MetricsDocument) -> Result<()> {
    let rows = doc
        .runs
        .iter()
        .map(|r| {
            vec![
                doc.dataset.clone(),
                doc.method.clone(),
                doc.model.clone(),
                r.run_index.to_string(),
                fmt(r.mean_confidence),
                fmt(r.mean_decisiveness),
                (r.n_total - r.n_punted).to_string(),
            ]
        })
        .collect();
    upsert_csv(path, MEANS_HEADER, 4, rows)
}

/// Per-assertion scatter source (confidence on x, decisiveness on y).
/// Rewritten whole on each run.
pub fn write_bins_csv(path: &Path, runs: &[MethodRun]) -> Result<()> {
    let mut out = String::from(
        "run_index,example_id,assertion_index,confidence,decisiveness,example_faithfulness\n",
    );
    for run in runs {
        for example in &run.examples {
            if let ExampleOutcome::Scored(s) = &example.outcome {
                for (i, a) in s.assertions.iter().enumerate() {
                    out.push_str(&csv_line(&[
                        run.run_index.to_string(),
                        example.id.clone(),
                        i.to_string(),
                        fmt(a.confidence),
                        fmt(a.decisiveness),
                        fmt(s.faithfulness),
                    ]));
                    out.push('\n');
                }
            }
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Run metadata: the only artifact allowed to carry timestamps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub created_unix: u64,
    pub duration_ms: u64,
    pub config_digest: String,
    pub dataset: String,
    pub k: usize,
    pub seed: u64,
    pub gateway: faithcheck_core::gateway::StatsSnapshot,
    pub config: serde_json::Value,
    pub version: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_escaping_round_trips() {
        let fields = vec![
            "plain".to_string(),
            "with,comma".to_string(),
            "with \"quotes\"".to_string(),
            "multi\nline".to_string(),
        ];
        let line = csv_line(&fields);
        assert_eq!(parse_csv_line(&line), fields);
    }

    #[test]
    fn upsert_is_commutative_across_run_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let row1 = vec!["d".into(), "vanilla".into(), "m1".into(), "1".into()];
        let row2 = vec!["d".into(), "uncertainty".into(), "m2".into(), "2".into()];
        let header = &["dataset", "method", "model", "n"];
        upsert_csv(&a, header, 3, vec![row1.clone()]).unwrap();
        upsert_csv(&a, header, 3, vec![row2.clone()]).unwrap();
        upsert_csv(&b, header, 3, vec![row2]).unwrap();
        upsert_csv(&b, header, 3, vec![row1]).unwrap();
        assert_eq!(
            std::fs::read(&a).unwrap(),
            std::fs::read(&b).unwrap(),
            "accumulation must not depend on run order"
        );
    }

    #[test]
    fn upsert_replaces_matching_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let header = &["k", "v"];
        upsert_csv(&path, header, 1, vec![vec!["a".into(), "1".into()]]).unwrap();
        upsert_csv(&path, header, 1, vec![vec!["a".into(), "2".into()]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "k,v\na,2\n");
    }
}
