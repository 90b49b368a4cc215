//! Interchangeable judge backends: remote LLM, deterministic hedge-lexicon
//! heuristic, and fixture replay. All speak the plain-text reply protocol in
//! [`super::parse`], so recording and replay are uniform across backends.

use std::sync::Arc;

use crate::gateway::{DecodeMode, Gateway, ModelSpec};

use super::fixtures::FixtureStore;
use super::lexicon::HedgeLexicon;
use super::parse::{
    parse_contradiction_reply, parse_decisiveness_reply, render_contradiction_reply,
    render_decisiveness_reply,
};
use super::{JudgeError, JudgeRequest};

pub trait JudgeBackend: Send + Sync {
    /// Raw reply text for the request. `attempt` lets re-sampling backends
    /// produce a fresh reply on parse retries; deterministic backends ignore
    /// it.
    fn raw_reply(&self, request: &JudgeRequest, attempt: u32) -> Result<String, JudgeError>;

    fn name(&self) -> &'static str;

    /// Deterministic backends return the same reply on every attempt, so
    /// parse retries are pointless for them.
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Offline heuristic judge backed by the hedge lexicon.
///
/// Decisiveness comes straight from the lexicon. Contradiction is a
/// token-overlap heuristic: canned answers never contradict, token-identical
/// or token-subset answers agree, anything else is a contradiction. It cannot
/// know that Honolulu is in Hawaii; when that matters, use the remote judge
/// or recorded fixtures.
pub struct LexiconBackend {
    lexicon: HedgeLexicon,
}

impl LexiconBackend {
    pub fn new(lexicon: HedgeLexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &HedgeLexicon {
        &self.lexicon
    }

    fn contradicts(&self, a: &str, b: &str) -> bool {
        if self.lexicon.is_punt(a) || self.lexicon.is_punt(b) {
            return false;
        }
        let ta = tokens(a);
        let tb = tokens(b);
        if ta.is_empty() || tb.is_empty() {
            return false;
        }
        let subset = |small: &Vec<String>, big: &Vec<String>| small.iter().all(|t| big.contains(t));
        !(subset(&ta, &tb) || subset(&tb, &ta))
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

impl JudgeBackend for LexiconBackend {
    fn raw_reply(&self, request: &JudgeRequest, _attempt: u32) -> Result<String, JudgeError> {
        match request {
            JudgeRequest::Decisiveness { response, .. } => {
                Ok(render_decisiveness_reply(&self.lexicon.score(response)))
            }
            JudgeRequest::Contradiction {
                assertion_a,
                assertion_b,
                ..
            } => Ok(render_contradiction_reply(
                self.contradicts(assertion_a, assertion_b),
            )),
        }
    }

    fn name(&self) -> &'static str {
        "lexicon"
    }
}

/// Replays recorded judge exchanges byte-for-byte; unrecorded requests fail.
pub struct ReplayBackend {
    store: FixtureStore,
}

impl ReplayBackend {
    pub fn new(store: FixtureStore) -> Self {
        Self { store }
    }
}

impl JudgeBackend for ReplayBackend {
    fn raw_reply(&self, request: &JudgeRequest, _attempt: u32) -> Result<String, JudgeError> {
        let digest = request.digest();
        match self.store.lookup(&digest)? {
            Some(record) => Ok(record.response_text),
            None => Err(JudgeError::MissingFixture { digest }),
        }
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

/// Prompt templates for the two judge tasks. The defaults ship with the
/// crate; deployments can load their own copies from disk.
#[derive(Debug, Clone)]
pub struct JudgePrompts {
    pub decisiveness: String,
    pub contradiction: String,
}

impl JudgePrompts {
    pub fn builtin() -> Self {
        Self {
            decisiveness: include_str!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/../../data/prompts/decisiveness.txt"
            ))
            .to_string(),
            contradiction: include_str!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/../../data/prompts/contradiction.txt"
            ))
            .to_string(),
        }
    }

    pub fn from_files(
        decisiveness: &std::path::Path,
        contradiction: &std::path::Path,
    ) -> Result<Self, JudgeError> {
        let read = |p: &std::path::Path| {
            std::fs::read_to_string(p)
                .map_err(|e| JudgeError::Config(format!("cannot read prompt {}: {e}", p.display())))
        };
        Ok(Self {
            decisiveness: read(decisiveness)?,
            contradiction: read(contradiction)?,
        })
    }
}

/// Judge backed by a generation model behind the gateway. Requests decode
/// greedily; the parse-retry attempt number doubles as the sample index so
/// retries are distinct cacheable requests.
pub struct RemoteBackend {
    gateway: Arc<Gateway>,
    model: ModelSpec,
    prompts: JudgePrompts,
}

impl RemoteBackend {
    pub fn new(gateway: Arc<Gateway>, model: ModelSpec, prompts: JudgePrompts) -> Self {
        let model = ModelSpec {
            decoding: crate::gateway::Decoding {
                mode: DecodeMode::Greedy,
                ..model.decoding
            },
            ..model
        };
        Self {
            gateway,
            model,
            prompts,
        }
    }

    fn prompt_for(&self, request: &JudgeRequest) -> String {
        match request {
            JudgeRequest::Decisiveness { question, response } => format!(
                "{}\n\nQuestion: {question}\nProposed answer: {response}\n",
                self.prompts.decisiveness.trim_end()
            ),
            JudgeRequest::Contradiction {
                question,
                assertion_a,
                assertion_b,
            } => format!(
                "{}\n\nQuestion: {question}\nCandidate Answer 1: {assertion_a}\nCandidate Answer 2: {assertion_b}\nVerdict:",
                self.prompts.contradiction.trim_end()
            ),
        }
    }
}

impl JudgeBackend for RemoteBackend {
    fn raw_reply(&self, request: &JudgeRequest, attempt: u32) -> Result<String, JudgeError> {
        let prompt = self.prompt_for(request);
        self.gateway
            .generate(&self.model, &prompt, attempt)
            .map_err(JudgeError::Gateway)
    }

    fn name(&self) -> &'static str {
        "remote"
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Wraps a backend and records every successful exchange into a fixture
/// store, so a later run can replay it offline.
pub struct RecordingBackend<B> {
    inner: B,
    store: FixtureStore,
}

impl<B: JudgeBackend> RecordingBackend<B> {
    pub fn new(inner: B, store: FixtureStore) -> Self {
        Self { inner, store }
    }
}

impl<B: JudgeBackend> JudgeBackend for RecordingBackend<B> {
    fn raw_reply(&self, request: &JudgeRequest, attempt: u32) -> Result<String, JudgeError> {
        let reply = self.inner.raw_reply(request, attempt)?;
        let parsed = match request {
            JudgeRequest::Decisiveness { .. } => parse_decisiveness_reply(&reply)
                .ok()
                .and_then(|r| serde_json::to_value(r).ok()),
            JudgeRequest::Contradiction { .. } => parse_contradiction_reply(&reply)
                .ok()
                .and_then(|v| serde_json::to_value(v).ok()),
        };
        self.store.record(request, &reply, parsed)?;
        Ok(reply)
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }
}
