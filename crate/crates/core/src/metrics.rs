//! Pure metric mathematics: per-example faithfulness, MFG, CMFG with
//! confidence binning, and punt filtering. No I/O.
//!
//! Faithfulness of a response is one minus the mean absolute gap between the
//! decisiveness of each assertion and the answering model's confidence in it.
//! MFG averages faithfulness across examples; CMFG first bins examples by
//! confidence and averages the per-bin means, which removes the dependence on
//! the model's confidence distribution. A strategy whose decisiveness ignores
//! confidence lands at CMFG 0.5 regardless of how good the model is.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of equal-width confidence bins used by CMFG.
pub const BIN_COUNT: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

/// Compensated (Neumaier) summation. Keeps aggregate results independent of
/// input order to well below 1e-12 for the population sizes used here.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated mean over an iterator; `None` when empty.
pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(acc.total() / n as f64)
    }
}

fn check_unit(value: f64, what: &str) -> Result<(), MetricsError> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(MetricsError::InvalidInput(format!(
            "{what} must lie in [0,1], got {value}"
        )));
    }
    Ok(())
}

/// A claim extracted from a response, with the decisiveness the wording
/// conveys. A punt (declining to answer) carries empty text and, per the
/// judging contract, decisiveness 1.0; punts never enter aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub text: String,
    pub decisiveness: f64,
    pub is_punt: bool,
}

impl Assertion {
    pub fn new(text: impl Into<String>, decisiveness: f64) -> Result<Self, MetricsError> {
        check_unit(decisiveness, "decisiveness")?;
        Ok(Self {
            text: text.into(),
            decisiveness,
            is_punt: false,
        })
    }

    /// The canonical punt encoding: empty text, decisiveness 1.0.
    pub fn punt() -> Self {
        Self {
            text: String::new(),
            decisiveness: 1.0,
            is_punt: true,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        check_unit(self.decisiveness, "decisiveness")?;
        if self.is_punt && (!self.text.is_empty() || self.decisiveness != 1.0) {
            return Err(MetricsError::InvalidInput(
                "punt assertions must have empty text and decisiveness 1.0".into(),
            ));
        }
        Ok(())
    }
}

/// Contradiction flags over the k resampled answers and the confidence they
/// imply: 1 minus the fraction of samples that contradict the assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub k: usize,
    pub contradiction_flags: Vec<bool>,
    pub confidence: f64,
}

impl ConfidenceReport {
    pub fn from_flags(flags: Vec<bool>) -> Result<Self, MetricsError> {
        if flags.is_empty() {
            return Err(MetricsError::InvalidInput(
                "confidence requires at least one sample".into(),
            ));
        }
        let k = flags.len();
        let contradicting = flags.iter().filter(|&&f| f).count();
        let confidence = 1.0 - contradicting as f64 / k as f64;
        Ok(Self {
            k,
            contradiction_flags: flags,
            confidence,
        })
    }
}

/// Per-example scoring input for the aggregate metrics: the (decisiveness,
/// confidence) pair of every assertion in the response, or a punt marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub example_id: String,
    /// (decisiveness, confidence) per assertion; empty iff punted.
    pub assertions: Vec<(f64, f64)>,
    pub faithfulness: f64,
    pub punted: bool,
}

impl ExampleScore {
    pub fn scored(
        example_id: impl Into<String>,
        assertions: Vec<(f64, f64)>,
    ) -> Result<Self, MetricsError> {
        let f = faithfulness(&assertions)?;
        Ok(Self {
            example_id: example_id.into(),
            assertions,
            faithfulness: f,
            punted: false,
        })
    }

    pub fn punted(example_id: impl Into<String>) -> Self {
        Self {
            example_id: example_id.into(),
            assertions: Vec::new(),
            faithfulness: 0.0,
            punted: true,
        }
    }

    /// Confidence used for binning: the mean over the example's assertions.
    pub fn mean_confidence(&self) -> Result<f64, MetricsError> {
        if self.punted {
            return Err(MetricsError::InvalidInput(format!(
                "example {} is punted and has no confidence",
                self.example_id
            )));
        }
        compensated_mean(self.assertions.iter().map(|&(_, c)| c)).ok_or_else(|| {
            MetricsError::InvalidInput(format!("example {} has no assertions", self.example_id))
        })
    }

    pub fn mean_decisiveness(&self) -> Option<f64> {
        if self.punted {
            return None;
        }
        compensated_mean(self.assertions.iter().map(|&(d, _)| d))
    }
}

/// Faithfulness of one response: 1 − mean |decisiveness − confidence| over
/// its assertions. Symmetric in each pair, bounded to the unit interval.
pub fn faithfulness(pairs: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::InvalidInput(
            "faithfulness requires at least one assertion; mark the example punted instead".into(),
        ));
    }
    let mut gaps = CompensatedSum::new();
    for &(dec, conf) in pairs {
        check_unit(dec, "decisiveness")?;
        check_unit(conf, "confidence")?;
        gaps.add((dec - conf).abs());
    }
    Ok((1.0 - gaps.total() / pairs.len() as f64).clamp(0.0, 1.0))
}

fn reject_punted(scores: &[ExampleScore]) -> Result<(), MetricsError> {
    if let Some(p) = scores.iter().find(|s| s.punted) {
        return Err(MetricsError::InvalidInput(format!(
            "punted example {} must be filtered out before aggregation",
            p.example_id
        )));
    }
    Ok(())
}

/// Mean faithfulness over non-punted examples.
pub fn mfg(scores: &[ExampleScore]) -> Result<f64, MetricsError> {
    reject_punted(scores)?;
    compensated_mean(scores.iter().map(|s| s.faithfulness))
        .ok_or_else(|| MetricsError::UndefinedMetric("MFG over an empty set".into()))
}

/// Equal-width bin of a confidence value. Bin i covers [i/10, (i+1)/10),
/// except the last bin which also includes 1.0. Bin edges are the IEEE
/// doubles nearest i/10 (computed as `i as f64 / 10.0`), so a confidence that
/// prints as an edge value lands in the bin that starts there.
pub fn bin_index(confidence: f64) -> Result<usize, MetricsError> {
    check_unit(confidence, "confidence")?;
    for i in (0..BIN_COUNT).rev() {
        if confidence >= i as f64 / 10.0 {
            return Ok(i);
        }
    }
    Ok(0)
}

/// CMFG plus its per-bin diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmfgBreakdown {
    pub cmfg: f64,
    /// Mean faithfulness per bin; `None` where the bin is empty.
    pub bin_means: Vec<Option<f64>>,
    pub bin_counts: Vec<usize>,
}

/// Conditional MFG: bin examples by mean confidence, average faithfulness
/// within each bin, then average the occupied bins. Empty bins are skipped
/// (and visible in `bin_counts`); imputing values for them would invent data.
pub fn cmfg(scores: &[ExampleScore]) -> Result<CmfgBreakdown, MetricsError> {
    reject_punted(scores)?;
    let mut sums: Vec<CompensatedSum> = vec![CompensatedSum::new(); BIN_COUNT];
    let mut counts = vec![0usize; BIN_COUNT];
    for s in scores {
        let bin = bin_index(s.mean_confidence()?)?;
        sums[bin].add(s.faithfulness);
        counts[bin] += 1;
    }
    let bin_means: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(sum, &n)| (n > 0).then(|| sum.total() / n as f64))
        .collect();
    let cmfg = compensated_mean(bin_means.iter().flatten().copied())
        .ok_or_else(|| MetricsError::UndefinedMetric("CMFG with all bins empty".into()))?;
    Ok(CmfgBreakdown {
        cmfg,
        bin_means,
        bin_counts: counts,
    })
}

/// Remove punted examples; downstream metrics run on the kept set only.
/// Returns the kept examples and the punt rate (punted / total; 0 on empty).
pub fn filter_punts(examples: Vec<ExampleScore>) -> (Vec<ExampleScore>, f64) {
    let total = examples.len();
    let kept: Vec<ExampleScore> = examples.into_iter().filter(|e| !e.punted).collect();
    let punt_rate = if total == 0 {
        0.0
    } else {
        (total - kept.len()) as f64 / total as f64
    };
    (kept, punt_rate)
}

/// Aggregate report over a full scored population (punted examples included
/// in the input; they are excluded from every metric except the punt rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mfg: f64,
    pub cmfg: f64,
    pub bin_means: Vec<Option<f64>>,
    pub bin_counts: Vec<usize>,
    pub n_total: usize,
    pub n_punted: usize,
    pub punt_rate: f64,
}

impl MetricsReport {
    pub fn compute(all: &[ExampleScore]) -> Result<Self, MetricsError> {
        let n_total = all.len();
        let (kept, punt_rate) = filter_punts(all.to_vec());
        let n_punted = n_total - kept.len();
        let mfg = mfg(&kept)?;
        let breakdown = cmfg(&kept)?;
        Ok(Self {
            mfg,
            cmfg: breakdown.cmfg,
            bin_means: breakdown.bin_means,
            bin_counts: breakdown.bin_counts,
            n_total,
            n_punted,
            punt_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faithfulness_matches_worked_examples() {
        assert_eq!(faithfulness(&[(0.8, 0.8)]).unwrap(), 1.0);
        assert_eq!(faithfulness(&[(1.0, 0.6)]).unwrap(), 0.6);
        assert_eq!(faithfulness(&[(0.5, 1.0), (0.5, 0.0)]).unwrap(), 0.5);
    }

    #[test]
    fn faithfulness_rejects_empty_and_out_of_range() {
        assert!(matches!(
            faithfulness(&[]),
            Err(MetricsError::InvalidInput(_))
        ));
        assert!(faithfulness(&[(1.2, 0.5)]).is_err());
        assert!(faithfulness(&[(0.5, -0.1)]).is_err());
        assert!(faithfulness(&[(f64::NAN, 0.5)]).is_err());
    }

    /// An example whose faithfulness is exactly `f`: one fully decisive
    /// assertion with confidence `f`.
    fn with_faithfulness(id: &str, f: f64) -> ExampleScore {
        let score = ExampleScore::scored(id, vec![(1.0, f)]).unwrap();
        assert_eq!(score.faithfulness, f);
        score
    }

    #[test]
    fn mfg_matches_worked_examples() {
        let scores: Vec<ExampleScore> = [1.0, 0.5, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &f)| with_faithfulness(&format!("e{i}"), f))
            .collect();
        assert_eq!(mfg(&scores).unwrap(), 0.5);
        assert_eq!(mfg(&scores[..1]).unwrap(), 1.0);

        let constant: Vec<ExampleScore> = (0..1000)
            .map(|i| with_faithfulness(&format!("c{i}"), 0.54))
            .collect();
        assert!((mfg(&constant).unwrap() - 0.54).abs() < 1e-15);
    }

    #[test]
    fn mfg_undefined_on_empty() {
        assert!(matches!(mfg(&[]), Err(MetricsError::UndefinedMetric(_))));
    }

    #[test]
    fn mfg_rejects_punted_input() {
        let scores = vec![ExampleScore::punted("p")];
        assert!(matches!(mfg(&scores), Err(MetricsError::InvalidInput(_))));
    }

    #[test]
    fn bin_index_boundaries() {
        assert_eq!(bin_index(0.0).unwrap(), 0);
        assert_eq!(bin_index(0.95).unwrap(), 9);
        assert_eq!(bin_index(1.0).unwrap(), 9);
        assert_eq!(bin_index(0.1).unwrap(), 1);
        assert_eq!(bin_index(0.09999999).unwrap(), 0);
        // Grid values from k-sample confidences land in the bin that starts
        // at their printed value.
        assert_eq!(bin_index(14.0 / 20.0).unwrap(), 7);
        assert_eq!(bin_index(0.7).unwrap(), 7);
        assert_eq!(bin_index(0.3).unwrap(), 3);
        assert!(bin_index(1.01).is_err());
        assert!(bin_index(-0.01).is_err());
    }

    fn single(id: &str, dec: f64, conf: f64) -> ExampleScore {
        ExampleScore::scored(id, vec![(dec, conf)]).unwrap()
    }

    #[test]
    fn cmfg_all_bins_perfect() {
        let scores: Vec<ExampleScore> = (0..10)
            .map(|i| {
                let conf = i as f64 / 10.0 + 0.05;
                single(&format!("e{i}"), conf, conf)
            })
            .collect();
        let out = cmfg(&scores).unwrap();
        assert_eq!(out.cmfg, 1.0);
        assert!(out.bin_counts.iter().all(|&c| c == 1));
        assert!(out.bin_means.iter().all(|m| m == &Some(1.0)));
    }

    #[test]
    fn cmfg_skips_empty_bins() {
        let scores = vec![single("a", 1.0, 0.05), single("b", 1.0, 0.95)];
        let out = cmfg(&scores).unwrap();
        assert_eq!(out.bin_counts[0], 1);
        assert_eq!(out.bin_counts[9], 1);
        assert_eq!(out.bin_counts.iter().sum::<usize>(), 2);
        // faithfulness is 1-|1-conf| = conf here; mean of 0.05 and 0.95.
        assert!((out.cmfg - 0.5).abs() < 1e-15);
        assert_eq!(out.bin_means[1], None);
    }

    #[test]
    fn cmfg_undefined_when_empty() {
        assert!(matches!(cmfg(&[]), Err(MetricsError::UndefinedMetric(_))));
    }

    #[test]
    fn filter_punts_examples() {
        let mut pop: Vec<ExampleScore> = (0..99)
            .map(|i| single(&format!("e{i}"), 0.5, 0.5))
            .collect();
        pop.push(ExampleScore::punted("p0"));
        let (kept, rate) = filter_punts(pop);
        assert_eq!(kept.len(), 99);
        assert_eq!(rate, 0.01);

        let pop2 = vec![single("a", 1.0, 1.0)];
        let (kept2, rate2) = filter_punts(pop2.clone());
        assert_eq!(kept2, pop2);
        assert_eq!(rate2, 0.0);

        let all_punts = vec![ExampleScore::punted("x"), ExampleScore::punted("y")];
        let (kept3, rate3) = filter_punts(all_punts);
        assert!(kept3.is_empty());
        assert_eq!(rate3, 1.0);
        assert!(matches!(mfg(&kept3), Err(MetricsError::UndefinedMetric(_))));
        assert!(matches!(
            cmfg(&kept3),
            Err(MetricsError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn confidence_report_from_flags() {
        let r = ConfidenceReport::from_flags(vec![false; 20]).unwrap();
        assert_eq!(r.confidence, 1.0);
        let r = ConfidenceReport::from_flags(vec![true; 20]).unwrap();
        assert_eq!(r.confidence, 0.0);
        let r = ConfidenceReport::from_flags(vec![true, false, false, true]).unwrap();
        assert_eq!(r.confidence, 0.5);
        assert_eq!(r.k, 4);
        assert!(ConfidenceReport::from_flags(vec![]).is_err());
    }

    #[test]
    fn report_invariants_hold() {
        let mut pop: Vec<ExampleScore> = (0..90)
            .map(|i| {
                single(
                    &format!("e{i}"),
                    (i % 10) as f64 / 10.0,
                    (i % 10) as f64 / 10.0 + 0.05,
                )
            })
            .collect();
        for i in 0..10 {
            pop.push(ExampleScore::punted(format!("p{i}")));
        }
        let report = MetricsReport::compute(&pop).unwrap();
        assert_eq!(report.n_total, 100);
        assert_eq!(report.n_punted, 10);
        assert_eq!(report.punt_rate, 0.1);
        assert_eq!(report.bin_counts.iter().sum::<usize>(), 90);
        let mean_of_means = compensated_mean(report.bin_means.iter().flatten().copied()).unwrap();
        assert!((report.cmfg - mean_of_means).abs() < 1e-15);
    }

    #[test]
    fn punt_assertion_encoding() {
        let p = Assertion::punt();
        assert!(p.is_punt && p.text.is_empty() && p.decisiveness == 1.0);
        p.validate().unwrap();
        let bad = Assertion {
            text: "x".into(),
            decisiveness: 1.0,
            is_punt: true,
        };
        assert!(bad.validate().is_err());
    }
}
