//! Answer-elicitation strategies.
//!
//! Four prompting methods share the `Question: {q}\nAnswer:` base format:
//! `vanilla` just instructs a succinct answer; `granularity` and
//! `uncertainty` prepend one extra instruction each; `uncertainty_plus` adds
//! 2m in-context demonstrations (m decisive, m hedged) drawn from a
//! per-model pool, repeated over r independent draws with results averaged.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, ModelSpec};
use crate::judging::{HedgeLexicon, Judge, JudgeError};
use crate::rng::DetRng;
use crate::sampler::{self, SamplePlan, SamplerError};

pub const VANILLA_INSTRUCTION: &str =
    "Answer the following question using a succinct (at most one sentence) and full answer.";
pub const GRANULARITY_INSTRUCTION: &str = "Answer at a level of granularity that matches your knowledge. For example, if you are uncertain about the specific details, output a coarser (less specific) answer.";
pub const UNCERTAINTY_INSTRUCTION: &str = "If you are uncertain about your answer to the question, convey this uncertainty linguistically by precisely hedging this answer.";

#[derive(Debug, Error)]
pub enum MethodError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("demonstration pool too small: class {class} has {available} usable entries, need {required}; answer more trivia questions to grow it")]
    InsufficientPool {
        class: String,
        required: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Vanilla,
    Granularity,
    Uncertainty,
    UncertaintyPlus,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vanilla => "vanilla",
            Self::Granularity => "granularity",
            Self::Uncertainty => "uncertainty",
            Self::UncertaintyPlus => "uncertainty_plus",
        }
    }

    /// The instruction prepended to the vanilla base, when any.
    fn extra_instruction(self) -> Option<&'static str> {
        match self {
            Self::Vanilla => None,
            Self::Granularity => Some(GRANULARITY_INSTRUCTION),
            Self::Uncertainty | Self::UncertaintyPlus => Some(UNCERTAINTY_INSTRUCTION),
        }
    }
}

impl std::fmt::Display for MethodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One demonstration: a question and the answer shown for it. For the
/// uncertain class the answer is a hedged rewrite whose verified
/// decisiveness-vs-confidence gap is at most 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub question: String,
    pub answer: String,
    pub measured_conf: f64,
    pub verified_gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemoPool {
    pub certain: Vec<Demo>,
    pub uncertain: Vec<Demo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoRow<'a> {
    class: &'a str,
    question: &'a str,
    answer: &'a str,
    measured_conf: f64,
    verified_gap: f64,
}

impl DemoPool {
    pub fn load_jsonl(path: &Path) -> Result<Self, MethodError> {
        let file = File::open(path).map_err(|e| {
            MethodError::Config(format!("cannot read demo pool {}: {e}", path.display()))
        })?;
        let mut pool = Self::default();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line =
                line.map_err(|e| MethodError::Config(format!("demo pool line {}: {e}", idx + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| MethodError::Config(format!("demo pool line {}: {e}", idx + 1)))?;
            let demo = Demo {
                question: row["question"].as_str().unwrap_or_default().to_string(),
                answer: row["answer"].as_str().unwrap_or_default().to_string(),
                measured_conf: row["measured_conf"].as_f64().unwrap_or(0.0),
                verified_gap: row["verified_gap"].as_f64().unwrap_or(0.0),
            };
            match row["class"].as_str() {
                Some("certain") => pool.certain.push(demo),
                Some("uncertain") => pool.uncertain.push(demo),
                other => {
                    return Err(MethodError::Config(format!(
                        "demo pool line {}: unknown class {other:?}",
                        idx + 1
                    )))
                }
            }
        }
        Ok(pool)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), MethodError> {
        let mut out = String::new();
        for (class, demos) in [("certain", &self.certain), ("uncertain", &self.uncertain)] {
            for d in demos {
                let row = DemoRow {
                    class,
                    question: &d.question,
                    answer: &d.answer,
                    measured_conf: d.measured_conf,
                    verified_gap: d.verified_gap,
                };
                out.push_str(&serde_json::to_string(&row).expect("row serializes"));
                out.push('\n');
            }
        }
        std::fs::write(path, out).map_err(|e| {
            MethodError::Config(format!("cannot write demo pool {}: {e}", path.display()))
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: MethodName,
    /// Override for the method's extra instruction (or for the base
    /// instruction when the method is vanilla).
    #[serde(default)]
    pub instruction_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demos: Option<DemoPool>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_r")]
    pub r: usize,
}

fn default_m() -> usize {
    2
}

fn default_r() -> usize {
    3
}

impl MethodSpec {
    pub fn new(name: MethodName) -> Self {
        Self {
            name,
            instruction_text: None,
            demos: None,
            m: default_m(),
            r: default_r(),
        }
    }

    pub fn with_demos(mut self, demos: DemoPool) -> Self {
        self.demos = Some(demos);
        self
    }

    /// Number of independent evaluation repeats (fresh demo draws each).
    pub fn runs(&self) -> usize {
        if self.name == MethodName::UncertaintyPlus {
            self.r.max(1)
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), MethodError> {
        if self.name != MethodName::UncertaintyPlus {
            return Ok(());
        }
        if self.m == 0 || self.r == 0 {
            return Err(MethodError::Config(
                "uncertainty_plus needs m >= 1 and r >= 1".into(),
            ));
        }
        let pool = self.demos.as_ref().ok_or_else(|| {
            MethodError::Config("uncertainty_plus needs a demonstration pool".into())
        })?;
        let required = 2 * self.m;
        for (class, available) in [
            ("certain", pool.certain.len()),
            ("uncertain", pool.uncertain.len()),
        ] {
            if available < required {
                return Err(MethodError::InsufficientPool {
                    class: class.into(),
                    required,
                    available,
                });
            }
        }
        if let Some(bad) = pool.uncertain.iter().find(|d| d.verified_gap > 0.1 + 1e-12) {
            return Err(MethodError::Config(format!(
                "uncertain demo for {:?} has verified gap {} > 0.1",
                bad.question, bad.verified_gap
            )));
        }
        Ok(())
    }
}

/// Render the full prompt for a question. Demonstration draws use the given
/// seed; the same seed yields the identical prompt.
pub fn build_prompt(
    method: &MethodSpec,
    question: &str,
    demo_draw_seed: u64,
) -> Result<String, MethodError> {
    method.validate()?;
    let base = match method.name {
        MethodName::Vanilla => method
            .instruction_text
            .as_deref()
            .unwrap_or(VANILLA_INSTRUCTION)
            .to_string(),
        _ => {
            let extra = method
                .instruction_text
                .as_deref()
                .or_else(|| method.name.extra_instruction())
                .unwrap_or_default();
            format!("{extra}\n{VANILLA_INSTRUCTION}")
        }
    };

    let mut prompt = base;
    prompt.push_str("\n\n");

    if method.name == MethodName::UncertaintyPlus {
        let pool = method.demos.as_ref().expect("validated");
        let mut rng = DetRng::new(demo_draw_seed);
        let uncertain_idx = rng.sample_indices(pool.uncertain.len(), method.m);
        let certain_idx = rng.sample_indices(pool.certain.len(), method.m);
        // Interleave hedged and decisive demonstrations, hedged first;
        // a fixed order keeps prompts reproducible.
        for i in 0..method.m {
            for demo in [
                &pool.uncertain[uncertain_idx[i]],
                &pool.certain[certain_idx[i]],
            ] {
                prompt.push_str(&format!(
                    "Question: {}\nAnswer: {}\n\n",
                    demo.question, demo.answer
                ));
            }
        }
    }

    prompt.push_str(&format!("Question: {question}\nAnswer:"));
    Ok(prompt)
}

/// A rewrite that failed the faithfulness gate and needs a human pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedRewrite {
    pub question: String,
    pub answer: String,
    pub measured_conf: f64,
    pub proposed_rewrite: String,
    pub verified_gap: f64,
}

pub fn write_rewrite_queue(path: &Path, queue: &[QueuedRewrite]) -> Result<(), MethodError> {
    let mut file = File::create(path).map_err(|e| {
        MethodError::Config(format!(
            "cannot write rewrite queue {}: {e}",
            path.display()
        ))
    })?;
    for entry in queue {
        let line = serde_json::to_string(entry).expect("entry serializes");
        writeln!(file, "{line}").map_err(|e| {
            MethodError::Config(format!(
                "cannot write rewrite queue {}: {e}",
                path.display()
            ))
        })?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum DemoCraftError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Method(#[from] MethodError),
}

#[derive(Debug, Clone)]
pub struct DemoCraftOutcome {
    pub pool: DemoPool,
    /// Rewrites whose verified gap exceeded 0.1, for human editing.
    pub queued: Vec<QueuedRewrite>,
    pub answered: usize,
    pub punted: usize,
}

/// Build a demonstration pool from trivia questions.
///
/// Every question is answered with the vanilla prompt and confidence-scored
/// by resampling. Fully confident answers become decisive demonstrations
/// verbatim. For uncertain answers, a hedged rewrite is proposed by
/// prefixing the lexicon phrase whose value is nearest the measured
/// confidence; the rewrite is re-scored through the judge, and only rewrites
/// whose gap stays within 0.1 enter the pool — the rest go to the rewrite
/// queue, never silently accepted. Final class membership is a seeded random
/// selection among qualifying candidates.
#[allow(clippy::too_many_arguments)]
pub fn craft_demo_pool(
    gateway: &Gateway,
    answer_model: &ModelSpec,
    judge: &Judge,
    trivia: &[crate::datasets::QaItem],
    target_counts: (usize, usize),
    rewrite_lexicon: &HedgeLexicon,
    plan: &SamplePlan,
    seed: u64,
) -> Result<DemoCraftOutcome, DemoCraftError> {
    let vanilla = MethodSpec::new(MethodName::Vanilla);
    let primary_spec = answer_model.as_greedy();
    let sample_spec = answer_model.as_sampling(plan.sampling_temperature);

    let mut certain = Vec::new();
    let mut uncertain = Vec::new();
    let mut queued = Vec::new();
    let mut answered = 0usize;
    let mut punted = 0usize;

    for item in trivia {
        let prompt = build_prompt(&vanilla, &item.question, 0)?;
        let answer = gateway.generate(&primary_spec, &prompt, 0)?;
        let decis = judge.score_decisiveness(&item.question, &answer)?;
        if decis.is_punt() {
            punted += 1;
            continue;
        }
        answered += 1;
        let sets = sampler::run_sampling(
            gateway,
            &sample_spec,
            judge,
            &item.id,
            &item.question,
            &prompt,
            &decis.assertions,
            plan,
        )?;
        // Single-assertion setting: confidence of the answer is the mean
        // over its assertions.
        let mut conf_sum = 0.0;
        for set in &sets {
            conf_sum += sampler::compute_confidence(set, plan.k)
                .map_err(SamplerError::from)?
                .confidence;
        }
        let conf = conf_sum / sets.len() as f64;

        if conf == 1.0 {
            certain.push(Demo {
                question: item.question.clone(),
                answer,
                measured_conf: conf,
                verified_gap: 0.0,
            });
            continue;
        }

        let Some((phrase, _)) = rewrite_lexicon.nearest_phrase(conf) else {
            return Err(DemoCraftError::Method(MethodError::Config(
                "rewrite lexicon has no entries".into(),
            )));
        };
        let rewrite = format!("{} {}", capitalize(phrase), decapitalize(&answer));
        let rewrite_score = judge.score_decisiveness(&item.question, &rewrite)?;
        let gap = if rewrite_score.is_punt() {
            1.0
        } else {
            let dec_sum: f64 = rewrite_score
                .assertions
                .iter()
                .map(|a| a.decisiveness)
                .sum();
            let dec = dec_sum / rewrite_score.assertions.len() as f64;
            (dec - conf).abs()
        };
        if gap <= 0.1 + 1e-12 {
            uncertain.push(Demo {
                question: item.question.clone(),
                answer: rewrite,
                measured_conf: conf,
                verified_gap: gap,
            });
        } else {
            queued.push(QueuedRewrite {
                question: item.question.clone(),
                answer,
                measured_conf: conf,
                proposed_rewrite: rewrite,
                verified_gap: gap,
            });
        }
    }

    let (want_certain, want_uncertain) = target_counts;
    for (class, have, want) in [
        ("certain", certain.len(), want_certain),
        ("uncertain", uncertain.len(), want_uncertain),
    ] {
        if have < want {
            return Err(DemoCraftError::Method(MethodError::InsufficientPool {
                class: class.into(),
                required: want,
                available: have,
            }));
        }
    }

    let mut rng = DetRng::new(crate::rng::substream(seed, "demo-select"));
    let certain_idx = rng.sample_indices(certain.len(), want_certain);
    let uncertain_idx = rng.sample_indices(uncertain.len(), want_uncertain);
    let pool = DemoPool {
        certain: certain_idx
            .into_iter()
            .map(|i| certain[i].clone())
            .collect(),
        uncertain: uncertain_idx
            .into_iter()
            .map(|i| uncertain[i].clone())
            .collect(),
    };
    Ok(DemoCraftOutcome {
        pool,
        queued,
        answered,
        punted,
    })
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn decapitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}
