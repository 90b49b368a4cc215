//! Parsing and rendering of judge replies.
//!
//! Every backend speaks the same plain-text protocol so that replies can be
//! recorded, replayed, and audited uniformly:
//!
//! ```text
//! Extracted assertion: <claim?>
//! Decisiveness score: <number>.
//! ```
//! (one or more pairs; an empty claim with score 1.0 is a punt), and
//!
//! ```text
//! Verdict: contradiction | no contradiction
//! ```

use crate::metrics::Assertion;

use super::DecisivenessResult;

/// Why a reply failed to parse. Wrapped into a protocol error by the caller
/// once retries are exhausted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue(pub String);

impl std::fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

const ASSERTION_PREFIX: &str = "extracted assertion:";
const SCORE_PREFIX: &str = "decisiveness score:";
const VERDICT_PREFIX: &str = "verdict:";

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let line = line.trim_start();
    if line.len() < prefix.len() {
        return None;
    }
    let (head, rest) = line.split_at(prefix.len());
    head.eq_ignore_ascii_case(prefix).then(|| rest.trim())
}

/// Numbers may carry a trailing period, as in `0.8.`.
fn parse_score(raw: &str) -> Result<f64, ParseIssue> {
    let cleaned = match raw.strip_suffix('.') {
        Some(s) if !s.is_empty() => s,
        _ => raw,
    };
    let value: f64 = cleaned
        .trim()
        .parse()
        .map_err(|_| ParseIssue(format!("unparseable decisiveness score {raw:?}")))?;
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(ParseIssue(format!(
            "decisiveness score out of [0,1]: {raw:?}"
        )));
    }
    Ok(value)
}

/// Parse a decisiveness reply into assertion/score pairs, then canonicalize
/// the punt form (a single empty assertion must score exactly 1.0).
pub fn parse_decisiveness_reply(raw: &str) -> Result<DecisivenessResult, ParseIssue> {
    let mut pairs: Vec<(String, f64)> = Vec::new();
    let mut pending: Option<String> = None;
    for line in raw.lines() {
        if let Some(text) = strip_prefix_ci(line, ASSERTION_PREFIX) {
            if pending.is_some() {
                return Err(ParseIssue("assertion without a decisiveness score".into()));
            }
            pending = Some(text.to_string());
        } else if let Some(score_text) = strip_prefix_ci(line, SCORE_PREFIX) {
            let text = pending
                .take()
                .ok_or_else(|| ParseIssue("decisiveness score without an assertion".into()))?;
            pairs.push((text, parse_score(score_text)?));
        }
    }
    if pending.is_some() {
        return Err(ParseIssue("trailing assertion without a score".into()));
    }
    if pairs.is_empty() {
        return Err(ParseIssue("no assertion/score pairs in reply".into()));
    }

    if pairs.len() == 1 && pairs[0].0.is_empty() {
        let score = pairs[0].1;
        if score != 1.0 {
            return Err(ParseIssue(format!("punt must score 1.0, got {score}")));
        }
        return Ok(DecisivenessResult::punt());
    }
    let mut assertions = Vec::with_capacity(pairs.len());
    for (text, score) in pairs {
        if text.is_empty() {
            return Err(ParseIssue(
                "empty assertion mixed with scored assertions".into(),
            ));
        }
        assertions.push(Assertion::new(text, score).map_err(|e| ParseIssue(e.to_string()))?);
    }
    Ok(DecisivenessResult { assertions })
}

pub fn parse_contradiction_reply(raw: &str) -> Result<bool, ParseIssue> {
    for line in raw.lines() {
        if let Some(rest) = strip_prefix_ci(line, VERDICT_PREFIX) {
            let verdict = rest.trim().trim_end_matches('.').to_ascii_lowercase();
            if verdict.starts_with("no contradiction") {
                return Ok(false);
            }
            if verdict.starts_with("contradiction") {
                return Ok(true);
            }
            return Err(ParseIssue(format!("unrecognized verdict {rest:?}")));
        }
    }
    Err(ParseIssue("no verdict line in reply".into()))
}

/// Render a result in the reply protocol (used by deterministic backends and
/// when seeding fixture stores).
pub fn render_decisiveness_reply(result: &DecisivenessResult) -> String {
    let mut out = String::new();
    for assertion in &result.assertions {
        out.push_str("Extracted assertion: ");
        out.push_str(&assertion.text);
        out.push('\n');
        out.push_str(&format!(
            "Decisiveness score: {}.\n",
            assertion.decisiveness
        ));
    }
    out
}

pub fn render_contradiction_reply(contradicts: bool) -> String {
    if contradicts {
        "Verdict: contradiction\n".to_string()
    } else {
        "Verdict: no contradiction\n".to_string()
    }
}
