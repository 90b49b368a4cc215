//! Dataset ingestion: a canonical JSONL schema for QA items, plus converters
//! and the filtering heuristics used to build evaluation sets (relation
//! whitelist, short-entity removal, single-answer requirement, ambiguity
//! exclusion, seeded subsampling).

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::rng::{substream, DetRng};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("subsample of {requested} exceeds surviving count {available}")]
    Subsample { requested: usize, available: usize },
    #[error("{0}")]
    Format(String),
}

/// One question in the canonical schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub relation: Option<String>,
    #[serde(default)]
    pub entity: Option<String>,
    #[serde(default)]
    pub ambiguous: bool,
}

/// Load canonical JSONL; every error carries its line number.
pub fn load_jsonl(path: &Path) -> Result<Vec<QaItem>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_jsonl(BufReader::new(file))
}

pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<QaItem>, DatasetError> {
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DatasetError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QaItem = serde_json::from_str(&line).map_err(|e| DatasetError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if item.question.trim().is_empty() {
            return Err(DatasetError::Line {
                line: line_no,
                message: "question must be non-empty".into(),
            });
        }
        if !seen.insert(item.id.clone()) {
            return Err(DatasetError::DuplicateId {
                line: line_no,
                id: item.id,
            });
        }
        items.push(item);
    }
    Ok(items)
}

pub fn write_jsonl(path: &Path, items: &[QaItem]) -> Result<(), DatasetError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Relations kept by the default entity-QA filter.
pub const DEFAULT_ALLOWED_RELATIONS: &[&str] = &[
    "director",
    "screenwriter",
    "producer",
    "author",
    "place of birth",
    "occupation",
];

#[derive(Debug, Clone)]
pub struct PopqaFilterOptions {
    pub allowed_relations: Vec<String>,
    pub min_entity_chars: usize,
    pub subsample_n: Option<usize>,
    pub seed: u64,
}

impl Default for PopqaFilterOptions {
    fn default() -> Self {
        Self {
            allowed_relations: DEFAULT_ALLOWED_RELATIONS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            min_entity_chars: 2,
            subsample_n: None,
            seed: 0,
        }
    }
}

/// Count distinct gold answers after case folding and whitespace collapsing.
fn distinct_gold_count(item: &QaItem) -> usize {
    let folded: BTreeSet<String> = item
        .gold_answers
        .iter()
        .map(|a| {
            a.split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase()
        })
        .filter(|a| !a.is_empty())
        .collect();
    folded.len()
}

/// Entity-QA preprocessing: keep listed relations, drop short entities, keep
/// only single-answer questions, then (optionally) take a seeded uniform
/// subsample. Output is sorted by id, so the pass is idempotent.
pub fn popqa_filter(
    items: Vec<QaItem>,
    options: &PopqaFilterOptions,
) -> Result<Vec<QaItem>, DatasetError> {
    let allowed: BTreeSet<&str> = options
        .allowed_relations
        .iter()
        .map(String::as_str)
        .collect();
    let mut survivors: Vec<QaItem> = items
        .into_iter()
        .filter(|item| {
            let relation_ok = item
                .relation
                .as_deref()
                .is_some_and(|r| allowed.contains(r));
            let entity_ok = item
                .entity
                .as_deref()
                .is_some_and(|e| e.chars().count() >= options.min_entity_chars);
            relation_ok && entity_ok && distinct_gold_count(item) == 1
        })
        .collect();

    if let Some(n) = options.subsample_n {
        if n > survivors.len() {
            return Err(DatasetError::Subsample {
                requested: n,
                available: survivors.len(),
            });
        }
        let mut rng = DetRng::new(substream(options.seed, "popqa-subsample"));
        let mut picked = rng.sample_indices(survivors.len(), n);
        picked.sort_unstable();
        survivors = picked.into_iter().map(|i| survivors[i].clone()).collect();
    }
    survivors.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(survivors)
}

/// Keep only items whose ambiguity flag is unset.
pub fn exclude_ambiguous(items: Vec<QaItem>) -> Vec<QaItem> {
    items.into_iter().filter(|i| !i.ambiguous).collect()
}

/// Convert a tab-separated entity-QA dump with a header row into the
/// canonical schema. Required columns: `id`, `question`; `subj` becomes the
/// entity, `prop` the relation; gold answers come from `possible_answers`
/// (a JSON array) or, failing that, the `obj` column.
pub fn convert_popqa_tsv(reader: impl Read) -> Result<Vec<QaItem>, DatasetError> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| DatasetError::Format("empty input: missing header row".into()))?
        .map_err(|e| DatasetError::Line {
            line: 1,
            message: e.to_string(),
        })?;
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let id_col = find("id").ok_or_else(|| DatasetError::Format("missing column 'id'".into()))?;
    let question_col =
        find("question").ok_or_else(|| DatasetError::Format("missing column 'question'".into()))?;
    let subj_col = find("subj");
    let prop_col = find("prop");
    let answers_col = find("possible_answers");
    let obj_col = find("obj");

    let mut items = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| DatasetError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |col: usize| fields.get(col).map(|s| s.trim()).unwrap_or_default();
        let gold_answers = if let Some(col) = answers_col {
            let raw = get(col);
            if raw.is_empty() {
                Vec::new()
            } else {
                let parsed: Value = serde_json::from_str(raw).map_err(|e| DatasetError::Line {
                    line: line_no,
                    message: format!("possible_answers is not a JSON array: {e}"),
                })?;
                parsed
                    .as_array()
                    .ok_or_else(|| DatasetError::Line {
                        line: line_no,
                        message: "possible_answers is not a JSON array".into(),
                    })?
                    .iter()
                    .filter_map(|v| v.as_str().map(String::from))
                    .collect()
            }
        } else {
            obj_col
                .map(|col| vec![get(col).to_string()])
                .unwrap_or_default()
        };
        items.push(QaItem {
            id: get(id_col).to_string(),
            question: get(question_col).to_string(),
            gold_answers,
            relation: prop_col
                .map(|c| get(c).to_string())
                .filter(|s| !s.is_empty()),
            entity: subj_col
                .map(|c| get(c).to_string())
                .filter(|s| !s.is_empty()),
            ambiguous: false,
        });
    }
    Ok(items)
}

/// Convert an ambiguity-annotated QA file (JSON array or JSONL) into the
/// canonical schema. An item is unambiguous iff it carries exactly one
/// `singleAnswer` annotation; gold answers are taken from it.
pub fn convert_ambig_qa(reader: impl Read) -> Result<Vec<QaItem>, DatasetError> {
    let mut text = String::new();
    let mut reader = BufReader::new(reader);
    reader
        .read_to_string(&mut text)
        .map_err(|e| DatasetError::Format(format!("cannot read input: {e}")))?;
    let records: Vec<Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)
            .map_err(|e| DatasetError::Format(format!("invalid JSON array: {e}")))?
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| DatasetError::Line {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?
    };

    let mut items = Vec::new();
    for (idx, record) in records.iter().enumerate() {
        let get_str = |key: &str| record.get(key).and_then(Value::as_str);
        let id = get_str("id")
            .map(String::from)
            .unwrap_or_else(|| format!("item-{idx:05}"));
        let question = get_str("question").unwrap_or_default().to_string();
        if question.is_empty() {
            return Err(DatasetError::Format(format!(
                "record {idx} has no question field"
            )));
        }
        let annotations = record
            .get("annotations")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let single = annotations.len() == 1
            && annotations[0].get("type").and_then(Value::as_str) == Some("singleAnswer");
        let gold_answers = if single {
            annotations[0]
                .get("answer")
                .and_then(Value::as_array)
                .map(|a| {
                    a.iter()
                        .filter_map(|v| v.as_str().map(String::from))
                        .collect()
                })
                .unwrap_or_default()
        } else {
            Vec::new()
        };
        items.push(QaItem {
            id,
            question,
            gold_answers,
            relation: None,
            entity: None,
            ambiguous: !single,
        });
    }
    Ok(items)
}
