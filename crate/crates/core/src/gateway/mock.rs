//! Deterministic mock model for desk-scale runs and tests.
//!
//! Each known question carries a weighted answer distribution. Greedy
//! decoding returns the modal answer (first listed on ties); sampling draws
//! from the distribution using a counter-based stream keyed on
//! (seed, question, sample index), so draws are reproducible regardless of
//! request order. Unknown questions get the configured punt response.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::{combine, hash_bytes, DetRng};

use super::GatewayError;

pub const DEFAULT_PUNT_RESPONSE: &str = "I don't know.";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MockAnswer {
    pub text: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MockQuestion {
    pub question: String,
    pub answers: Vec<MockAnswer>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MockTables {
    #[serde(default = "default_punt_response")]
    pub default_punt_response: String,
    pub questions: Vec<MockQuestion>,
}

fn default_punt_response() -> String {
    DEFAULT_PUNT_RESPONSE.to_string()
}

impl MockTables {
    pub fn new(questions: Vec<MockQuestion>) -> Self {
        Self {
            default_punt_response: default_punt_response(),
            questions,
        }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| {
            GatewayError::Config(format!("cannot read mock answers {}: {e}", path.display()))
        })?;
        let tables: Self = serde_json::from_str(&text).map_err(|e| {
            GatewayError::Config(format!("invalid mock answers {}: {e}", path.display()))
        })?;
        tables.validate()?;
        Ok(tables)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        for q in &self.questions {
            if q.answers.is_empty() {
                return Err(GatewayError::Config(format!(
                    "mock question {:?} has no answers",
                    q.question
                )));
            }
            for a in &q.answers {
                if !a.weight.is_finite() || a.weight <= 0.0 {
                    return Err(GatewayError::Config(format!(
                        "mock answer weight must be positive, got {} for {:?}",
                        a.weight, q.question
                    )));
                }
            }
        }
        Ok(())
    }

    /// Match a prompt to a table question. Prompts end with
    /// `Question: <text>\nAnswer:`, so the final question line is parsed
    /// first; a longest-substring scan covers free-form prompts.
    fn find(&self, prompt: &str) -> Option<&MockQuestion> {
        if let Some(q) = final_question_line(prompt) {
            if let Some(hit) = self.questions.iter().find(|mq| mq.question == q) {
                return Some(hit);
            }
        }
        self.questions
            .iter()
            .filter(|mq| prompt.contains(&mq.question))
            .max_by_key(|mq| mq.question.len())
    }

    fn modal_answer<'a>(&self, q: &'a MockQuestion) -> &'a str {
        let mut best = &q.answers[0];
        for a in &q.answers[1..] {
            if a.weight > best.weight {
                best = a;
            }
        }
        &best.text
    }

    fn sampled_answer<'a>(&self, q: &'a MockQuestion, seed: u64, sample_index: u32) -> &'a str {
        let state = combine(
            seed,
            &[hash_bytes(q.question.as_bytes()), u64::from(sample_index)],
        );
        let u = DetRng::new(state).next_f64();
        let total: f64 = q.answers.iter().map(|a| a.weight).sum();
        let mut accumulated = 0.0;
        for a in &q.answers {
            accumulated += a.weight / total;
            if u < accumulated {
                return &a.text;
            }
        }
        &q.answers.last().expect("validated non-empty").text
    }

    pub fn respond(&self, prompt: &str, greedy: bool, seed: u64, sample_index: u32) -> String {
        match self.find(prompt) {
            None => self.default_punt_response.clone(),
            Some(q) => {
                if greedy {
                    self.modal_answer(q).to_string()
                } else {
                    self.sampled_answer(q, seed, sample_index).to_string()
                }
            }
        }
    }
}

/// The text of the last `Question:` line in a prompt, when it is followed by
/// the `Answer:` cue.
fn final_question_line(prompt: &str) -> Option<String> {
    let idx = prompt.rfind("Question:")?;
    let rest = &prompt[idx + "Question:".len()..];
    let line = rest.lines().next()?.trim();
    let after = rest.lines().nth(1).map(str::trim_start);
    if after.is_some_and(|l| l.starts_with("Answer:")) && !line.is_empty() {
        Some(line.to_string())
    } else {
        None
    }
}
