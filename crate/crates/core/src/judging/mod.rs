//! Turning raw response text into scored assertions and contradiction
//! verdicts.
//!
//! Decisiveness asks: based only on the wording, how strongly does the
//! response commit to each claim it makes? Contradiction asks whether two
//! candidate answers to the same question can both be true. Both are judged
//! through an interchangeable backend (remote model, hedge lexicon, or
//! recorded fixtures); contradiction rather than mutual entailment is the
//! relation, because answers at different granularity ("Honolulu" vs
//! "Hawaii") should count as consistent.

mod backend;
mod fixtures;
mod lexicon;
mod parse;

pub use backend::{
    JudgeBackend, JudgePrompts, LexiconBackend, RecordingBackend, RemoteBackend, ReplayBackend,
};
pub use fixtures::{FixtureRecord, FixtureStore};
pub use lexicon::{default_punt_patterns, HedgeLexicon};
pub use parse::{
    parse_contradiction_reply, parse_decisiveness_reply, render_contradiction_reply,
    render_decisiveness_reply, ParseIssue,
};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canon;
use crate::gateway::GatewayError;
use crate::metrics::Assertion;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(
        "judge protocol error after {attempts} attempt(s): {issue}; last reply: {last_reply:?}"
    )]
    Protocol {
        attempts: u32,
        issue: String,
        last_reply: String,
    },
    #[error("missing fixture for request digest {digest}")]
    MissingFixture { digest: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One request to the judge, in canonical form. The digest of the canonical
/// JSON is the fixture key; parse-retry attempts are not part of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JudgeRequest {
    Decisiveness {
        question: String,
        response: String,
    },
    Contradiction {
        question: String,
        assertion_a: String,
        assertion_b: String,
    },
}

impl JudgeRequest {
    pub fn decisiveness(question: impl Into<String>, response: impl Into<String>) -> Self {
        Self::Decisiveness {
            question: question.into(),
            response: response.into(),
        }
    }

    pub fn contradiction(
        question: impl Into<String>,
        assertion_a: impl Into<String>,
        assertion_b: impl Into<String>,
    ) -> Self {
        Self::Contradiction {
            question: question.into(),
            assertion_a: assertion_a.into(),
            assertion_b: assertion_b.into(),
        }
    }

    pub fn canonical_value(&self) -> Value {
        serde_json::to_value(self).expect("request serializes")
    }

    pub fn digest(&self) -> String {
        canon::digest(&self.canonical_value())
    }
}

/// Scored assertions extracted from one response. A punt is encoded
/// canonically as exactly one assertion with empty text and decisiveness 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisivenessResult {
    pub assertions: Vec<Assertion>,
}

impl DecisivenessResult {
    pub fn single(assertion: Assertion) -> Self {
        Self {
            assertions: vec![assertion],
        }
    }

    pub fn punt() -> Self {
        Self {
            assertions: vec![Assertion::punt()],
        }
    }

    pub fn is_punt(&self) -> bool {
        self.assertions.len() == 1 && self.assertions[0].is_punt
    }

    fn validate(&self) -> Result<(), String> {
        if self.assertions.is_empty() {
            return Err("a decisiveness result needs at least one assertion".into());
        }
        for a in &self.assertions {
            a.validate().map_err(|e| e.to_string())?;
        }
        if !self.is_punt() && self.assertions.iter().any(|a| a.is_punt) {
            return Err("punt assertion mixed into a scored result".into());
        }
        Ok(())
    }
}

/// Binary contradiction verdict, with the backend's verbatim reply for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionVerdict {
    pub contradicts: bool,
    pub raw_judgement: String,
}

/// Judge orchestrator: drives a backend, retries on malformed replies (for
/// backends that can re-sample), enforces the canned-response rule, and
/// memoizes verdicts by request digest.
pub struct Judge {
    backend: Arc<dyn JudgeBackend>,
    punt_patterns: Vec<String>,
    max_attempts: u32,
    decisiveness_memo: Mutex<HashMap<String, DecisivenessResult>>,
    contradiction_memo: Mutex<HashMap<String, ContradictionVerdict>>,
}

impl Judge {
    /// Two retries on malformed output before giving up.
    pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

    pub fn new(backend: Arc<dyn JudgeBackend>, punt_patterns: Vec<String>) -> Self {
        Self {
            backend,
            punt_patterns: punt_patterns.iter().map(|p| p.to_lowercase()).collect(),
            max_attempts: Self::DEFAULT_MAX_ATTEMPTS,
            decisiveness_memo: Mutex::new(HashMap::new()),
            contradiction_memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    fn is_canned(&self, text: &str) -> bool {
        if text.trim().is_empty() {
            return true;
        }
        let folded = text.to_lowercase();
        self.punt_patterns.iter().any(|p| folded.contains(p))
    }

    fn attempts_for_backend(&self) -> u32 {
        if self.backend.is_deterministic() {
            1
        } else {
            self.max_attempts
        }
    }

    /// Extract scored assertions from a response, or the canonical punt.
    pub fn score_decisiveness(
        &self,
        question: &str,
        response: &str,
    ) -> Result<DecisivenessResult, JudgeError> {
        if response.is_empty() {
            return Err(JudgeError::InvalidInput(
                "cannot score an empty response".into(),
            ));
        }
        let request = JudgeRequest::decisiveness(question, response);
        let digest = request.digest();
        if let Some(hit) = self.decisiveness_memo.lock().unwrap().get(&digest) {
            return Ok(hit.clone());
        }

        let mut last_issue = String::new();
        let mut last_reply = String::new();
        let attempts = self.attempts_for_backend();
        for attempt in 0..attempts {
            let reply = self.backend.raw_reply(&request, attempt)?;
            match parse_decisiveness_reply(&reply) {
                Ok(result) => match result.validate() {
                    Ok(()) => {
                        self.decisiveness_memo
                            .lock()
                            .unwrap()
                            .insert(digest, result.clone());
                        return Ok(result);
                    }
                    Err(issue) => {
                        last_issue = issue;
                        last_reply = reply;
                    }
                },
                Err(issue) => {
                    last_issue = issue.to_string();
                    last_reply = reply;
                }
            }
        }
        Err(JudgeError::Protocol {
            attempts,
            issue: last_issue,
            last_reply,
        })
    }

    /// Does candidate `b` contradict assertion `a` for this question?
    ///
    /// Canned or punting candidates never contradict: the backend prompt asks
    /// for that, but only this post-rule guarantees it. Identical strings are
    /// consistent by definition and skip the backend entirely.
    pub fn check_contradiction(
        &self,
        question: &str,
        a: &str,
        b: &str,
    ) -> Result<ContradictionVerdict, JudgeError> {
        if a.trim().is_empty() {
            return Err(JudgeError::InvalidInput(
                "contradiction check needs a non-empty primary assertion".into(),
            ));
        }
        if self.is_canned(a) || self.is_canned(b) {
            return Ok(ContradictionVerdict {
                contradicts: false,
                raw_judgement: "no contradiction (canned-response rule)".into(),
            });
        }
        if a == b {
            return Ok(ContradictionVerdict {
                contradicts: false,
                raw_judgement: "no contradiction (identical answers)".into(),
            });
        }

        let request = JudgeRequest::contradiction(question, a, b);
        let digest = request.digest();
        if let Some(hit) = self.contradiction_memo.lock().unwrap().get(&digest) {
            return Ok(hit.clone());
        }

        let mut last_issue = String::new();
        let mut last_reply = String::new();
        let attempts = self.attempts_for_backend();
        for attempt in 0..attempts {
            let reply = self.backend.raw_reply(&request, attempt)?;
            match parse_contradiction_reply(&reply) {
                Ok(contradicts) => {
                    let verdict = ContradictionVerdict {
                        contradicts,
                        raw_judgement: reply,
                    };
                    self.contradiction_memo
                        .lock()
                        .unwrap()
                        .insert(digest, verdict.clone());
                    return Ok(verdict);
                }
                Err(issue) => {
                    last_issue = issue.to_string();
                    last_reply = reply;
                }
            }
        }
        Err(JudgeError::Protocol {
            attempts,
            issue: last_issue,
            last_reply,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ScriptedBackend {
        replies: Vec<String>,
        calls: std::sync::atomic::AtomicU32,
    }

    impl ScriptedBackend {
        fn new(replies: Vec<&str>) -> Self {
            Self {
                replies: replies.into_iter().map(String::from).collect(),
                calls: std::sync::atomic::AtomicU32::new(0),
            }
        }
    }

    impl JudgeBackend for ScriptedBackend {
        fn raw_reply(&self, _request: &JudgeRequest, _attempt: u32) -> Result<String, JudgeError> {
            let i = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) as usize;
            Ok(self.replies[i.min(self.replies.len() - 1)].clone())
        }

        fn name(&self) -> &'static str {
            "scripted"
        }

        fn is_deterministic(&self) -> bool {
            false
        }
    }

    fn judge_with(backend: ScriptedBackend) -> Judge {
        Judge::new(Arc::new(backend), default_punt_patterns())
    }

    #[test]
    fn retries_then_succeeds_on_malformed_output() {
        let judge = judge_with(ScriptedBackend::new(vec![
            "garbage",
            "Extracted assertion: the answer.\nDecisiveness score: 0.7.",
        ]));
        let res = judge.score_decisiveness("q", "the answer").unwrap();
        assert_eq!(res.assertions[0].decisiveness, 0.7);
    }

    #[test]
    fn protocol_error_after_bounded_retries() {
        let judge = judge_with(ScriptedBackend::new(vec!["garbage"]));
        let err = judge.score_decisiveness("q", "resp").unwrap_err();
        match err {
            JudgeError::Protocol { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("expected protocol error, got {other:?}"),
        }
    }

    #[test]
    fn canned_candidates_never_contradict() {
        let judge = judge_with(ScriptedBackend::new(vec!["Verdict: contradiction"]));
        let verdict = judge
            .check_contradiction(
                "q",
                "David Beckham.",
                "Please use Google search for questions like this.",
            )
            .unwrap();
        assert!(!verdict.contradicts);
        // And the backend was never consulted.
        let verdict = judge.check_contradiction("q", "same", "same").unwrap();
        assert!(!verdict.contradicts);
    }

    #[test]
    fn verdicts_are_memoized_per_request() {
        let backend = ScriptedBackend::new(vec!["Verdict: contradiction"]);
        let judge = judge_with(backend);
        let v1 = judge.check_contradiction("q", "a", "b").unwrap();
        let v2 = judge.check_contradiction("q", "a", "b").unwrap();
        assert_eq!(v1, v2);
        assert!(v1.contradicts);
    }

    #[test]
    fn empty_response_is_invalid_input() {
        let judge = judge_with(ScriptedBackend::new(vec!["x"]));
        assert!(matches!(
            judge.score_decisiveness("q", ""),
            Err(JudgeError::InvalidInput(_))
        ));
        assert!(matches!(
            judge.check_contradiction("q", "  ", "b"),
            Err(JudgeError::InvalidInput(_))
        ));
    }

    #[test]
    fn request_digests_are_canonical() {
        let a = JudgeRequest::decisiveness("q", "r");
        let b = JudgeRequest::decisiveness("q", "r");
        assert_eq!(a.digest(), b.digest());
        assert_ne!(
            a.digest(),
            JudgeRequest::decisiveness("q", "other").digest()
        );
        assert_ne!(
            a.digest(),
            JudgeRequest::contradiction("q", "r", "s").digest()
        );
    }
}
