//! End-to-end evaluation pipeline: prompt each question, judge the primary
//! answer, resample for confidence, and assemble per-example records ready
//! for aggregation.
//!
//! Examples end in one of three buckets: scored, punted (the model declined;
//! excluded from metrics but counted in the punt rate), or unscorable (the
//! judge protocol broke down; counted separately from punts so punt rates
//! stay comparable across runs). Infrastructure failures abort with a
//! partial-run error; completed work is already in the checkpoint, so a
//! rerun with the same config resumes instead of recomputing.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{DatasetError, QaItem};
use crate::gateway::{Gateway, GatewayError, ModelSpec};
use crate::judging::{Judge, JudgeError};
use crate::methods::{build_prompt, MethodError, MethodSpec};
use crate::metrics::{compensated_mean, ExampleScore, MetricsError};
use crate::rng::substream_indexed;
use crate::sampler::{self, SamplePlan, SampledAnswerSet, SamplerError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("judge failure: {0}")]
    Judge(JudgeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Method(#[from] MethodError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("partial run: {completed}/{total} examples finished in run {run_index}; checkpoint saved, rerun with the same config to resume ({message})")]
    PartialRun {
        run_index: usize,
        completed: usize,
        total: usize,
        message: String,
    },
}

impl From<SamplerError> for PipelineError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Gateway(g) => Self::Gateway(g),
            SamplerError::Judge(j) => Self::Judge(j),
            SamplerError::Metrics(m) => Self::Metrics(m),
        }
    }
}

/// Per-assertion scoring detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub text: String,
    pub decisiveness: f64,
    pub confidence: f64,
    pub contradiction_flags: Vec<bool>,
}

/// One resampled answer as stored in the example record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub response: String,
    pub assertions: Vec<String>,
    pub punted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredOutcome {
    pub assertions: Vec<AssertionOutcome>,
    pub samples: Vec<SampleOutcome>,
    pub faithfulness: f64,
    pub mean_decisiveness: f64,
    pub mean_confidence: f64,
    pub sample_punt_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExampleOutcome {
    Scored(ScoredOutcome),
    Punted,
    Unscorable { reason: String },
}

/// Full record for one evaluated question, as emitted to examples.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub question: String,
    pub method: String,
    pub model: String,
    pub run_index: usize,
    pub primary_response: String,
    pub outcome: ExampleOutcome,
}

impl EvalExample {
    /// Metric-level view: scored and punted examples participate in the
    /// aggregates; unscorable ones are reported in their own bucket.
    pub fn to_score(&self) -> Option<ExampleScore> {
        match &self.outcome {
            ExampleOutcome::Scored(s) => Some(ExampleScore {
                example_id: self.id.clone(),
                assertions: s
                    .assertions
                    .iter()
                    .map(|a| (a.decisiveness, a.confidence))
                    .collect(),
                faithfulness: s.faithfulness,
                punted: false,
            }),
            ExampleOutcome::Punted => Some(ExampleScore::punted(self.id.clone())),
            ExampleOutcome::Unscorable { .. } => None,
        }
    }
}

/// Split examples into metric inputs and the unscorable count.
pub fn collect_scores(examples: &[EvalExample]) -> (Vec<ExampleScore>, usize) {
    let mut scores = Vec::with_capacity(examples.len());
    let mut unscorable = 0usize;
    for example in examples {
        match example.to_score() {
            Some(score) => scores.push(score),
            None => unscorable += 1,
        }
    }
    (scores, unscorable)
}

/// One full pass over the dataset (uncertainty_plus repeats this r times
/// with fresh demonstration draws).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub run_index: usize,
    pub demo_seed: u64,
    pub examples: Vec<EvalExample>,
}

#[derive(Debug, Clone)]
pub struct EvaluationSettings {
    pub method: MethodSpec,
    pub answer_model: ModelSpec,
    pub plan: SamplePlan,
    pub seed: u64,
    /// Label recorded on every example (normally the answer model name).
    pub model_label: String,
}

/// Append-only log of completed examples keyed by (run, question id).
/// Rows carry the config digest so a checkpoint can never silently resume a
/// different run.
pub struct CheckpointLog {
    path: PathBuf,
    config_digest: String,
    completed: BTreeMap<(usize, String), EvalExample>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointRow {
    config_digest: String,
    run_index: usize,
    question_id: String,
    example: EvalExample,
    /// The judged sample sets behind the example, kept for audit and reuse.
    sampled_sets: Vec<SampledAnswerSet>,
}

impl CheckpointLog {
    pub fn open(path: impl Into<PathBuf>, config_digest: &str) -> Result<Self, PipelineError> {
        let path = path.into();
        let mut completed = BTreeMap::new();
        if path.exists() {
            let file = File::open(&path)
                .map_err(|e| PipelineError::Checkpoint(format!("open {}: {e}", path.display())))?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| {
                    PipelineError::Checkpoint(format!(
                        "read {} line {}: {e}",
                        path.display(),
                        idx + 1
                    ))
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: CheckpointRow = serde_json::from_str(&line).map_err(|e| {
                    PipelineError::Checkpoint(format!(
                        "corrupt checkpoint {} line {}: {e}",
                        path.display(),
                        idx + 1
                    ))
                })?;
                if row.config_digest != config_digest {
                    return Err(PipelineError::Checkpoint(format!(
                        "checkpoint {} was written by a different configuration",
                        path.display()
                    )));
                }
                completed.insert((row.run_index, row.question_id), row.example);
            }
        }
        Ok(Self {
            path,
            config_digest: config_digest.to_string(),
            completed,
        })
    }

    pub fn completed_count(&self) -> usize {
        self.completed.len()
    }

    fn get(&self, run_index: usize, question_id: &str) -> Option<&EvalExample> {
        self.completed.get(&(run_index, question_id.to_string()))
    }

    fn append(
        &mut self,
        run_index: usize,
        example: &EvalExample,
        sampled_sets: Vec<SampledAnswerSet>,
    ) -> Result<(), PipelineError> {
        let row = CheckpointRow {
            config_digest: self.config_digest.clone(),
            run_index,
            question_id: example.id.clone(),
            example: example.clone(),
            sampled_sets,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| {
                PipelineError::Checkpoint(format!("append {}: {e}", self.path.display()))
            })?;
        let line = serde_json::to_string(&row)
            .map_err(|e| PipelineError::Checkpoint(format!("serialize row: {e}")))?;
        writeln!(file, "{line}").map_err(|e| {
            PipelineError::Checkpoint(format!("append {}: {e}", self.path.display()))
        })?;
        self.completed
            .insert((run_index, example.id.clone()), example.clone());
        Ok(())
    }
}

fn unscorable(
    settings: &EvaluationSettings,
    item: &QaItem,
    run_index: usize,
    primary: String,
    reason: String,
) -> EvalExample {
    EvalExample {
        id: item.id.clone(),
        question: item.question.clone(),
        method: settings.method.name.to_string(),
        model: settings.model_label.clone(),
        run_index,
        primary_response: primary,
        outcome: ExampleOutcome::Unscorable { reason },
    }
}

/// Evaluate one question end to end. Returns the example plus the sampled
/// sets behind it (empty for punts and unscorable outcomes).
fn evaluate_item(
    gateway: &Gateway,
    judge: &Judge,
    settings: &EvaluationSettings,
    item: &QaItem,
    run_index: usize,
    demo_seed: u64,
) -> Result<(EvalExample, Vec<SampledAnswerSet>), PipelineError> {
    let prompt = build_prompt(&settings.method, &item.question, demo_seed)?;
    let primary_spec = settings.answer_model.as_greedy();
    let sample_spec = settings
        .answer_model
        .as_sampling(settings.plan.sampling_temperature);

    let primary_response = gateway.generate(&primary_spec, &prompt, 0)?;

    let decisiveness = match judge.score_decisiveness(&item.question, &primary_response) {
        Ok(result) => result,
        Err(JudgeError::Protocol {
            attempts, issue, ..
        }) => {
            return Ok((
                unscorable(
                    settings,
                    item,
                    run_index,
                    primary_response,
                    format!("primary answer unparseable after {attempts} attempts: {issue}"),
                ),
                Vec::new(),
            ));
        }
        Err(other) => return Err(PipelineError::Judge(other)),
    };

    let base = EvalExample {
        id: item.id.clone(),
        question: item.question.clone(),
        method: settings.method.name.to_string(),
        model: settings.model_label.clone(),
        run_index,
        primary_response: primary_response.clone(),
        outcome: ExampleOutcome::Punted,
    };

    if decisiveness.is_punt() {
        return Ok((base, Vec::new()));
    }

    let sets = match sampler::run_sampling(
        gateway,
        &sample_spec,
        judge,
        &item.id,
        &item.question,
        &prompt,
        &decisiveness.assertions,
        &settings.plan,
    ) {
        Ok(sets) => sets,
        Err(SamplerError::Judge(JudgeError::Protocol {
            attempts, issue, ..
        })) => {
            return Ok((
                unscorable(
                    settings,
                    item,
                    run_index,
                    primary_response,
                    format!("sample judging failed after {attempts} attempts: {issue}"),
                ),
                Vec::new(),
            ));
        }
        Err(other) => return Err(other.into()),
    };

    let mut assertions = Vec::with_capacity(sets.len());
    for set in &sets {
        let report = sampler::compute_confidence(set, settings.plan.k)?;
        assertions.push(AssertionOutcome {
            text: set.primary_assertion.text.clone(),
            decisiveness: set.primary_assertion.decisiveness,
            confidence: report.confidence,
            contradiction_flags: report.contradiction_flags,
        });
    }
    let pairs: Vec<(f64, f64)> = assertions
        .iter()
        .map(|a| (a.decisiveness, a.confidence))
        .collect();
    let faithfulness = crate::metrics::faithfulness(&pairs)?;
    let mean_decisiveness = compensated_mean(pairs.iter().map(|p| p.0)).expect("non-empty");
    let mean_confidence = compensated_mean(pairs.iter().map(|p| p.1)).expect("non-empty");

    // All sets share the same k sample texts; take the sample view from the
    // first set.
    let samples: Vec<SampleOutcome> = sets[0]
        .samples
        .iter()
        .map(|s| SampleOutcome {
            response: s.response_text.clone(),
            assertions: s.assertions.iter().map(|a| a.text.clone()).collect(),
            punted: s.is_punt(),
        })
        .collect();
    let sample_punt_rate =
        samples.iter().filter(|s| s.punted).count() as f64 / samples.len() as f64;

    let example = EvalExample {
        outcome: ExampleOutcome::Scored(ScoredOutcome {
            assertions,
            samples,
            faithfulness,
            mean_decisiveness,
            mean_confidence,
            sample_punt_rate,
        }),
        ..base
    };
    Ok((example, sets))
}

/// Run the method over the dataset. Gateway failures abort with a partial-run
/// error (completed examples are checkpointed); judge-protocol failures mark
/// single examples unscorable and continue.
pub fn run_evaluation(
    gateway: &Gateway,
    judge: &Judge,
    settings: &EvaluationSettings,
    items: &[QaItem],
    mut checkpoint: Option<&mut CheckpointLog>,
) -> Result<Vec<MethodRun>, PipelineError> {
    settings.method.validate()?;
    let mut runs = Vec::with_capacity(settings.method.runs());
    for run_index in 0..settings.method.runs() {
        let demo_seed = substream_indexed(settings.seed, "demo-draw", run_index as u64);
        let mut examples = Vec::with_capacity(items.len());
        for (done, item) in items.iter().enumerate() {
            if let Some(log) = checkpoint.as_deref_mut() {
                if let Some(prior) = log.get(run_index, &item.id) {
                    examples.push(prior.clone());
                    continue;
                }
            }
            let (example, sets) = evaluate_item(
                gateway, judge, settings, item, run_index, demo_seed,
            )
            .map_err(|e| match e {
                PipelineError::Gateway(g) => PipelineError::PartialRun {
                    run_index,
                    completed: done,
                    total: items.len(),
                    message: g.to_string(),
                },
                other => other,
            })?;
            if let Some(log) = checkpoint.as_deref_mut() {
                log.append(run_index, &example, sets)?;
            }
            examples.push(example);
        }
        runs.push(MethodRun {
            run_index,
            demo_seed,
            examples,
        });
    }
    Ok(runs)
}

/// Accuracy over scored examples: an answer counts as correct iff its
/// primary assertion does not contradict any gold answer string. Punts are
/// excluded from the denominator. The exact-match rate (case-folded,
/// whitespace-collapsed) is reported alongside for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub exact_match: f64,
    pub n_evaluated: usize,
    pub n_punted: usize,
    pub n_unscorable: usize,
}

pub fn compute_accuracy(
    judge: &Judge,
    examples: &[EvalExample],
    gold: &BTreeMap<String, Vec<String>>,
) -> Result<AccuracyReport, PipelineError> {
    let mut n_evaluated = 0usize;
    let mut n_punted = 0usize;
    let mut n_unscorable = 0usize;
    let mut correct = 0usize;
    let mut exact = 0usize;
    for example in examples {
        let scored = match &example.outcome {
            ExampleOutcome::Scored(s) => s,
            ExampleOutcome::Punted => {
                n_punted += 1;
                continue;
            }
            ExampleOutcome::Unscorable { .. } => {
                n_unscorable += 1;
                continue;
            }
        };
        let golds = gold.get(&example.id).ok_or_else(|| {
            PipelineError::Dataset(DatasetError::Format(format!(
                "no gold answers for example {}",
                example.id
            )))
        })?;
        if golds.is_empty() {
            return Err(PipelineError::Dataset(DatasetError::Format(format!(
                "example {} has an empty gold answer list",
                example.id
            ))));
        }
        n_evaluated += 1;
        let assertion = &scored.assertions[0];
        let mut contradicted = false;
        for g in golds {
            let verdict = judge
                .check_contradiction(&example.question, &assertion.text, g)
                .map_err(PipelineError::Judge)?;
            if verdict.contradicts {
                contradicted = true;
                break;
            }
        }
        if !contradicted {
            correct += 1;
        }
        let primary_norm = normalize_answer(&example.primary_response);
        let assertion_norm = normalize_answer(&assertion.text);
        if golds.iter().any(|g| {
            let g = normalize_answer(g);
            g == assertion_norm || g == primary_norm
        }) {
            exact += 1;
        }
    }
    if n_evaluated == 0 {
        return Err(PipelineError::Metrics(MetricsError::UndefinedMetric(
            "accuracy over zero scored examples (all punted or unscorable)".into(),
        )));
    }
    Ok(AccuracyReport {
        accuracy: correct as f64 / n_evaluated as f64,
        exact_match: exact as f64 / n_evaluated as f64,
        n_evaluated,
        n_punted,
        n_unscorable,
    })
}

/// Exact-match normalization: case-fold, drop punctuation and articles,
/// collapse whitespace.
fn normalize_answer(text: &str) -> String {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Write examples to a JSONL file (one canonical line per example).
pub fn write_examples_jsonl(path: &Path, runs: &[MethodRun]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for run in runs {
        for example in &run.examples {
            out.push_str(&serde_json::to_string(example).expect("example serializes"));
            out.push('\n');
        }
    }
    std::fs::write(path, out)
        .map_err(|e| PipelineError::Checkpoint(format!("write {}: {e}", path.display())))?;
    Ok(())
}

pub fn read_examples_jsonl(path: &Path) -> Result<Vec<EvalExample>, PipelineError> {
    let file = File::open(path)
        .map_err(|e| PipelineError::Checkpoint(format!("open {}: {e}", path.display())))?;
    let mut examples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| {
            PipelineError::Checkpoint(format!("read {} line {}: {e}", path.display(), idx + 1))
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let example: EvalExample = serde_json::from_str(&line).map_err(|e| {
            PipelineError::Checkpoint(format!("parse {} line {}: {e}", path.display(), idx + 1))
        })?;
        examples.push(example);
    }
    Ok(examples)
}
