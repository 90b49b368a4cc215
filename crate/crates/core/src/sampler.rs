//! Consistency-based confidence: resample k answers to the same prompt,
//! extract each sample's assertions, and measure how often they contradict
//! the primary assertion. Confidence is the fraction of samples that do NOT
//! contradict it, so it always lies on the 1/k grid.
//!
//! Punted samples count as non-contradicting under the canned-response rule;
//! a model that punts often therefore looks confident, which is why the
//! per-example sample punt rate is surfaced alongside the score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, ModelSpec};
use crate::judging::{DecisivenessResult, Judge, JudgeError};
use crate::metrics::{Assertion, ConfidenceReport, MetricsError};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// How to resample: k draws at the given temperature, with the run seed
/// driving any deterministic provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_sampling_temperature")]
    pub sampling_temperature: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    20
}

fn default_sampling_temperature() -> f64 {
    1.0
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            k: default_k(),
            sampling_temperature: default_sampling_temperature(),
            seed: 0,
        }
    }
}

impl SamplePlan {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.k == 0 {
            return Err(SamplerError::Metrics(MetricsError::InvalidInput(
                "sample plan needs k >= 1".into(),
            )));
        }
        if !self.sampling_temperature.is_finite() || self.sampling_temperature <= 0.0 {
            return Err(SamplerError::Metrics(MetricsError::InvalidInput(
                "sampling temperature must be positive".into(),
            )));
        }
        Ok(())
    }
}

/// One judged sample: its raw text, extracted assertions, and whether any of
/// them contradicts the primary assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleJudgement {
    pub response_text: String,
    pub assertions: Vec<Assertion>,
    pub contradicts_primary: bool,
}

impl SampleJudgement {
    pub fn is_punt(&self) -> bool {
        self.assertions.len() == 1 && self.assertions[0].is_punt
    }
}

/// The k judged samples for one primary assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledAnswerSet {
    pub question_id: String,
    pub primary_assertion: Assertion,
    pub samples: Vec<SampleJudgement>,
}

impl SampledAnswerSet {
    pub fn contradiction_flags(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.contradicts_primary).collect()
    }

    pub fn sample_punt_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_punt()).count()
    }
}

/// Confidence from a complete sample set: 1 − (contradicting / k).
pub fn compute_confidence(
    set: &SampledAnswerSet,
    expected_k: usize,
) -> Result<ConfidenceReport, MetricsError> {
    if set.samples.len() != expected_k {
        return Err(MetricsError::InvalidInput(format!(
            "sample set for {} has {} entries, expected k={expected_k}",
            set.question_id,
            set.samples.len()
        )));
    }
    ConfidenceReport::from_flags(set.contradiction_flags())
}

/// Issue the k sampling generations concurrently (indices 1..=k; index 0 is
/// the primary). Results come back in index order regardless of completion
/// order; the gateway pool bounds actual parallelism.
pub fn draw_samples(
    gateway: &Gateway,
    sample_spec: &ModelSpec,
    prompt: &str,
    k: usize,
) -> Result<Vec<String>, GatewayError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..k)
            .map(|i| scope.spawn(move || gateway.generate(sample_spec, prompt, (i + 1) as u32)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sample thread panicked"))
            .collect()
    })
}

/// Extract assertions from every sample text, in order.
pub fn judge_samples(
    judge: &Judge,
    question: &str,
    texts: &[String],
) -> Result<Vec<DecisivenessResult>, JudgeError> {
    texts
        .iter()
        .map(|t| judge.score_decisiveness(question, t))
        .collect()
}

/// Build the sample set for one primary assertion: the primary contradicts a
/// sample iff it contradicts ANY assertion extracted from that sample.
/// Punted samples never contradict.
pub fn assemble_set(
    judge: &Judge,
    question_id: &str,
    question: &str,
    primary: &Assertion,
    texts: &[String],
    judged: &[DecisivenessResult],
) -> Result<SampledAnswerSet, JudgeError> {
    let mut samples = Vec::with_capacity(texts.len());
    for (text, result) in texts.iter().zip(judged) {
        let contradicts = if result.is_punt() {
            false
        } else {
            let mut any = false;
            for assertion in &result.assertions {
                if judge
                    .check_contradiction(question, &primary.text, &assertion.text)?
                    .contradicts
                {
                    any = true;
                    break;
                }
            }
            any
        };
        samples.push(SampleJudgement {
            response_text: text.clone(),
            assertions: result.assertions.clone(),
            contradicts_primary: contradicts,
        });
    }
    Ok(SampledAnswerSet {
        question_id: question_id.to_string(),
        primary_assertion: primary.clone(),
        samples,
    })
}

/// Full resampling pass for one question: draw k samples with the same
/// prompt as the primary answer, judge them once, then score consistency
/// against each primary assertion.
#[allow(clippy::too_many_arguments)]
pub fn run_sampling(
    gateway: &Gateway,
    sample_spec: &ModelSpec,
    judge: &Judge,
    question_id: &str,
    question: &str,
    prompt: &str,
    primary_assertions: &[Assertion],
    plan: &SamplePlan,
) -> Result<Vec<SampledAnswerSet>, SamplerError> {
    plan.validate()?;
    let texts = draw_samples(gateway, sample_spec, prompt, plan.k)?;
    let judged = judge_samples(judge, question, &texts)?;
    primary_assertions
        .iter()
        .map(|primary| {
            assemble_set(judge, question_id, question, primary, &texts, &judged)
                .map_err(SamplerError::from)
        })
        .collect()
}
