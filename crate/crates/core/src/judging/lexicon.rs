//! Hedge lexicon: a deterministic, offline mapping from hedging phrases to
//! decisiveness values, calibrated against survey data on how people read
//! verbal probability expressions. The shipped file is configuration, not
//! ground truth; regenerate it from the survey source before trusting the
//! absolute values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::judging::JudgeError;
use crate::metrics::Assertion;

use super::DecisivenessResult;

/// Phrase table plus punt detection patterns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeLexicon {
    /// Case-folded hedge phrase -> decisiveness value in `[0, 1]`.
    entries: BTreeMap<String, f64>,
    /// Case-folded substrings that mark a response as declining to answer.
    punt_patterns: Vec<String>,
    /// Score assigned when no hedge matches.
    default_decisive: f64,
}

impl HedgeLexicon {
    pub fn new(
        entries: BTreeMap<String, f64>,
        punt_patterns: Vec<String>,
        default_decisive: f64,
    ) -> Result<Self, JudgeError> {
        let lexicon = Self {
            entries,
            punt_patterns,
            default_decisive,
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        let text = fs::read_to_string(path).map_err(|e| {
            JudgeError::Config(format!("cannot read lexicon {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
            .map_err(|e| JudgeError::Config(format!("invalid lexicon {}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self, JudgeError> {
        let raw: Self = serde_json::from_str(text)
            .map_err(|e| JudgeError::Config(format!("lexicon JSON: {e}")))?;
        // Re-fold keys so hand-edited files with mixed case still behave.
        let mut entries = BTreeMap::new();
        for (phrase, value) in raw.entries {
            let folded = fold(&phrase);
            if entries.insert(folded.clone(), value).is_some() {
                return Err(JudgeError::Config(format!(
                    "lexicon phrases collide after case folding: {folded:?}"
                )));
            }
        }
        let punt_patterns = raw.punt_patterns.iter().map(|p| fold(p)).collect();
        Self::new(entries, punt_patterns, raw.default_decisive)
    }

    fn validate(&self) -> Result<(), JudgeError> {
        for (phrase, value) in &self.entries {
            if phrase.trim().is_empty() {
                return Err(JudgeError::Config("empty lexicon phrase".into()));
            }
            if !(0.0..=1.0).contains(value) || !value.is_finite() {
                return Err(JudgeError::Config(format!(
                    "lexicon value for {phrase:?} out of [0,1]: {value}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.default_decisive) {
            return Err(JudgeError::Config(format!(
                "default_decisive out of [0,1]: {}",
                self.default_decisive
            )));
        }
        if self.punt_patterns.iter().any(|p| p.trim().is_empty()) {
            return Err(JudgeError::Config("empty punt pattern".into()));
        }
        Ok(())
    }

    pub fn punt_patterns(&self) -> &[String] {
        &self.punt_patterns
    }

    pub fn default_decisive(&self) -> f64 {
        self.default_decisive
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(p, &v)| (p.as_str(), v))
    }

    /// True when the text reads as a canned refusal to answer.
    pub fn is_punt(&self, text: &str) -> bool {
        matches_any_pattern(&self.punt_patterns, text)
    }

    /// Score a response: punt patterns win first; otherwise matched hedge
    /// spans are stripped to form the assertion text and the minimum matched
    /// decisiveness governs (the most hedged phrase sets the tone). With no
    /// match the response is fully decisive.
    pub fn score(&self, response: &str) -> DecisivenessResult {
        if self.is_punt(response) {
            return DecisivenessResult::punt();
        }
        let folded = FoldedText::new(response);
        let matches = self.find_matches(&folded);
        if matches.is_empty() {
            let assertion = Assertion::new(tidy(response), self.default_decisive)
                .expect("validated lexicon value");
            return DecisivenessResult::single(assertion);
        }
        let decisiveness = matches
            .iter()
            .map(|m| m.value)
            .fold(f64::INFINITY, f64::min);
        let stripped = folded.strip_spans(&matches);
        let text = tidy(&stripped);
        if !text.chars().any(char::is_alphanumeric) {
            // Nothing but hedges left: the response asserts nothing.
            return DecisivenessResult::punt();
        }
        let assertion = Assertion::new(text, decisiveness).expect("validated lexicon value");
        DecisivenessResult::single(assertion)
    }

    /// The hedge phrase whose value is nearest the target, for mechanized
    /// rewrites. Ties go to the lexicographically smallest phrase.
    pub fn nearest_phrase(&self, target: f64) -> Option<(&str, f64)> {
        let mut best: Option<(&str, f64)> = None;
        for (phrase, value) in &self.entries {
            let gap = (value - target).abs();
            match best {
                Some((_, bv)) if (bv - target).abs() <= gap => {}
                _ => best = Some((phrase.as_str(), *value)),
            }
        }
        best
    }

    /// All candidate spans, resolved longest-match-wins. Ties on length break
    /// lexicographically by phrase, then by position, so overlap resolution
    /// is total.
    fn find_matches(&self, folded: &FoldedText) -> Vec<SpanMatch> {
        let mut candidates: Vec<SpanMatch> = Vec::new();
        for (phrase, &value) in &self.entries {
            for (start, end) in folded.find_word_bounded(phrase) {
                candidates.push(SpanMatch {
                    start,
                    end,
                    value,
                    phrase: phrase.clone(),
                });
            }
        }
        candidates.sort_by(|a, b| {
            (b.end - b.start)
                .cmp(&(a.end - a.start))
                .then_with(|| a.phrase.cmp(&b.phrase))
                .then_with(|| a.start.cmp(&b.start))
        });
        let mut accepted: Vec<SpanMatch> = Vec::new();
        for cand in candidates {
            if accepted
                .iter()
                .all(|m| cand.end <= m.start || cand.start >= m.end)
            {
                accepted.push(cand);
            }
        }
        accepted.sort_by_key(|m| m.start);
        accepted
    }
}

#[derive(Debug, Clone)]
struct SpanMatch {
    /// Char positions in the folded text.
    start: usize,
    end: usize,
    value: f64,
    phrase: String,
}

/// Case-fold a pattern or phrase. Characters whose lowercase form is not a
/// single char are kept as-is so char offsets line up with the original.
fn fold(text: &str) -> String {
    text.chars().map(fold_char).collect()
}

fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn matches_any_pattern(patterns: &[String], text: &str) -> bool {
    let folded = fold(text);
    patterns.iter().any(|p| folded.contains(p.as_str()))
}

/// Original text plus its one-to-one folded char sequence.
struct FoldedText {
    original: Vec<char>,
    folded: Vec<char>,
}

impl FoldedText {
    fn new(text: &str) -> Self {
        let original: Vec<char> = text.chars().collect();
        let folded: Vec<char> = original.iter().map(|&c| fold_char(c)).collect();
        Self { original, folded }
    }

    /// Occurrences of `phrase` (already folded) at word boundaries, as char
    /// spans.
    fn find_word_bounded(&self, phrase: &str) -> Vec<(usize, usize)> {
        let needle: Vec<char> = phrase.chars().collect();
        if needle.is_empty() || needle.len() > self.folded.len() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for start in 0..=(self.folded.len() - needle.len()) {
            if self.folded[start..start + needle.len()] != needle[..] {
                continue;
            }
            let end = start + needle.len();
            let before_ok = start == 0 || !self.folded[start - 1].is_alphanumeric();
            let after_ok = end == self.folded.len() || !self.folded[end].is_alphanumeric();
            if before_ok && after_ok {
                out.push((start, end));
            }
        }
        out
    }

    /// The original text with the given char spans removed.
    fn strip_spans(&self, spans: &[SpanMatch]) -> String {
        let mut keep = vec![true; self.original.len()];
        for span in spans {
            for flag in keep.iter_mut().take(span.end).skip(span.start) {
                *flag = false;
            }
        }
        self.original
            .iter()
            .zip(&keep)
            .filter_map(|(&c, &k)| k.then_some(c))
            .collect()
    }
}

/// Cleanup after hedge stripping: collapse whitespace, drop orphaned leading
/// connectors and punctuation, capitalize the first letter.
fn tidy(text: &str) -> String {
    let mut collapsed = String::with_capacity(text.len());
    let mut last_space = true;
    for c in text.chars() {
        if c.is_whitespace() {
            if !last_space {
                collapsed.push(' ');
                last_space = true;
            }
        } else {
            collapsed.push(c);
            last_space = false;
        }
    }
    let mut rest = collapsed.trim();
    loop {
        let trimmed = rest.trim_start_matches([',', ';', ':', ' ']);
        let lowered = fold(trimmed);
        let mut advanced = trimmed;
        for connector in ["about this", "but", "that", "though"] {
            if lowered.starts_with(connector) {
                let end = connector.len();
                let boundary = lowered[end..]
                    .chars()
                    .next()
                    .is_none_or(|c| !c.is_alphanumeric());
                if boundary {
                    advanced = &trimmed[end..];
                    break;
                }
            }
        }
        if advanced == rest {
            break;
        }
        rest = advanced.trim();
    }
    let rest = rest.trim().trim_start_matches([',', ';', ':']).trim();
    let mut chars = rest.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Punt detection defaults used when no lexicon is configured (e.g. with the
/// replay or remote judge backends).
pub fn default_punt_patterns() -> Vec<String> {
    [
        "i don't know",
        "i do not know",
        "i don't have",
        "i cannot answer",
        "i can't answer",
        "i'm not able to answer",
        "i am not able to answer",
        "please use google",
        "i'm sorry, i can't",
        "unable to provide an answer",
        "no answer",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_lexicon() -> HedgeLexicon {
        let mut entries = BTreeMap::new();
        entries.insert("i think".into(), 0.8);
        entries.insert("i'm not really sure".into(), 0.6);
        entries.insert("may be".into(), 0.55);
        entries.insert("either".into(), 0.5);
        entries.insert("might".into(), 0.5);
        HedgeLexicon::new(entries, default_punt_patterns(), 1.0).unwrap()
    }

    #[test]
    fn no_hedge_is_fully_decisive() {
        let lex = sample_lexicon();
        let res = lex.score("Barack Obama was born in 1961.");
        assert!(!res.is_punt());
        assert_eq!(res.assertions.len(), 1);
        assert_eq!(res.assertions[0].decisiveness, 1.0);
        assert_eq!(res.assertions[0].text, "Barack Obama was born in 1961.");
    }

    #[test]
    fn minimum_matched_value_governs() {
        let lex = sample_lexicon();
        let res = lex.score("I'm not really sure, but I think it was 1961.");
        assert_eq!(res.assertions.len(), 1);
        assert_eq!(res.assertions[0].decisiveness, 0.6);
        assert_eq!(res.assertions[0].text, "It was 1961.");
    }

    #[test]
    fn punt_patterns_win_first() {
        let lex = sample_lexicon();
        let res = lex.score("I don't know.");
        assert!(res.is_punt());
        assert_eq!(res.assertions.len(), 1);
        assert_eq!(res.assertions[0].decisiveness, 1.0);
        assert!(res.assertions[0].text.is_empty());
    }

    #[test]
    fn word_boundaries_are_respected() {
        let lex = sample_lexicon();
        // "mighty" must not trigger the "might" hedge.
        let res = lex.score("The mighty river flows east.");
        assert_eq!(res.assertions[0].decisiveness, 1.0);
        // "neither" must not trigger "either".
        let res = lex.score("Neither claim is documented.");
        assert_eq!(res.assertions[0].decisiveness, 1.0);
    }

    #[test]
    fn pure_function_of_inputs() {
        let lex = sample_lexicon();
        let once = lex.score("I think it might be 1961.");
        let twice = lex.score("I think it might be 1961.");
        assert_eq!(once, twice);
        assert_eq!(once.assertions[0].decisiveness, 0.5);
    }

    #[test]
    fn all_hedges_and_nothing_else_is_a_punt() {
        let lex = sample_lexicon();
        let res = lex.score("I'm not really sure.");
        assert!(res.is_punt());
    }

    #[test]
    fn nearest_phrase_lookup() {
        let lex = sample_lexicon();
        let (phrase, value) = lex.nearest_phrase(0.62).unwrap();
        assert_eq!(phrase, "i'm not really sure");
        assert_eq!(value, 0.6);
        // Exact tie between 0.5 entries resolves lexicographically.
        let (phrase, _) = lex.nearest_phrase(0.5).unwrap();
        assert_eq!(phrase, "either");
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut entries = BTreeMap::new();
        entries.insert("surely".into(), 1.5);
        assert!(HedgeLexicon::new(entries, vec![], 1.0).is_err());
    }

    #[test]
    fn json_round_trip_and_fold_collision() {
        let json = r#"{
            "entries": {"I Think": 0.8, "probably": 0.7},
            "punt_patterns": ["I don't know"],
            "default_decisive": 1.0
        }"#;
        let lex = HedgeLexicon::from_json(json).unwrap();
        assert_eq!(lex.score("I think so.").assertions[0].decisiveness, 0.8);
        assert!(lex.is_punt("Sorry, I DON'T KNOW that one."));

        let collide = r#"{
            "entries": {"I Think": 0.8, "i think": 0.7},
            "punt_patterns": [],
            "default_decisive": 1.0
        }"#;
        assert!(HedgeLexicon::from_json(collide).is_err());
    }
}
