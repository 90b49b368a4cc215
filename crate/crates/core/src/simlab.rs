//! Synthetic-agent laboratory: validates the metric stack without any model
//! calls by generating (decisiveness, confidence) populations from
//! parameterized policies.
//!
//! The two confidence-blind policies (`Decisive` and `Random`) realize the
//! CMFG 0.5 baseline: a strategy that ignores confidence scores 0.5 no matter
//! how the confidence mass is distributed. `Random` draws the decisiveness
//! level uniformly from the two extremes (fully decisive or fully hedged);
//! that is the choice for which the per-bin mean faithfulness is 0.5 at every
//! confidence level. A continuous uniform decisiveness draw would instead
//! converge to 2/3 and would not be a confidence-independent 0.5 baseline.

use serde::{Deserialize, Serialize};

use crate::metrics::{ExampleScore, MetricsError};
use crate::rng::{substream_indexed, DetRng};

/// Distribution of the synthetic model's confidence values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfidenceDist {
    Uniform,
    Beta { a: f64, b: f64 },
    Point { v: f64 },
    TwoPoint { v1: f64, v2: f64, p: f64 },
}

/// How the synthetic agent picks decisiveness given its confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Always fully decisive.
    Decisive,
    /// Uniformly random choice between fully decisive and fully hedged,
    /// independent of confidence.
    Random,
    /// Decisiveness equals confidence exactly.
    Faithful,
    /// Decisiveness is one minus confidence.
    AntiFaithful,
    /// Faithful plus Gaussian noise, clamped to the unit interval.
    NoisyFaithful { sigma: f64 },
}

/// A parameterized generator of scored populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAgent {
    pub confidence_dist: ConfidenceDist,
    pub policy: Policy,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticAgent {
    pub fn new(confidence_dist: ConfidenceDist, policy: Policy, n: usize, seed: u64) -> Self {
        Self {
            confidence_dist,
            policy,
            n,
            seed,
        }
    }
}

fn draw_confidence(dist: ConfidenceDist, rng: &mut DetRng) -> f64 {
    match dist {
        ConfidenceDist::Uniform => rng.next_f64(),
        ConfidenceDist::Beta { a, b } => rng.beta(a, b).clamp(0.0, 1.0),
        ConfidenceDist::Point { v } => v,
        ConfidenceDist::TwoPoint { v1, v2, p } => {
            if rng.next_bool(p) {
                v1
            } else {
                v2
            }
        }
    }
}

fn draw_decisiveness(policy: Policy, confidence: f64, rng: &mut DetRng) -> f64 {
    match policy {
        Policy::Decisive => 1.0,
        Policy::Random => {
            if rng.next_bool(0.5) {
                1.0
            } else {
                0.0
            }
        }
        Policy::Faithful => confidence,
        Policy::AntiFaithful => 1.0 - confidence,
        Policy::NoisyFaithful { sigma } => (confidence + sigma * rng.normal()).clamp(0.0, 1.0),
    }
}

/// Generate the agent's population of single-assertion example scores.
///
/// Each example uses its own counter-based stream keyed on (seed, index), so
/// the population is reproducible and independent of generation order.
pub fn simulate(agent: &SyntheticAgent) -> Vec<ExampleScore> {
    (0..agent.n)
        .map(|i| {
            let mut rng = DetRng::new(substream_indexed(agent.seed, "simlab", i as u64));
            let conf = draw_confidence(agent.confidence_dist, &mut rng);
            let dec = draw_decisiveness(agent.policy, conf, &mut rng);
            ExampleScore::scored(format!("sim-{i:06}"), vec![(dec, conf)])
                .expect("simulated values are in range")
        })
        .collect()
}

/// Independent brute-force recomputation of MFG and CMFG, used only to
/// cross-check the metrics module. Shares no code with it: plain loops,
/// naive summation, its own re-derivation of faithfulness from the raw
/// (decisiveness, confidence) pairs, and its own bin classification (same
/// documented edge definition: edges at `i as f64 / 10.0`, last bin closed).
pub fn metric_oracle(scores: &[ExampleScore]) -> Result<(f64, f64), MetricsError> {
    if scores.iter().any(|s| s.punted) {
        return Err(MetricsError::InvalidInput(
            "oracle expects punted examples to be filtered out".into(),
        ));
    }
    if scores.is_empty() {
        return Err(MetricsError::UndefinedMetric(
            "oracle over an empty set".into(),
        ));
    }

    let mut faiths = Vec::with_capacity(scores.len());
    let mut confs = Vec::with_capacity(scores.len());
    for s in scores {
        if s.assertions.is_empty() {
            return Err(MetricsError::InvalidInput(format!(
                "example {} has no assertion pairs",
                s.example_id
            )));
        }
        let mut gap_sum = 0.0;
        let mut conf_sum = 0.0;
        for &(d, c) in &s.assertions {
            gap_sum += (d - c).abs();
            conf_sum += c;
        }
        faiths.push(1.0 - gap_sum / s.assertions.len() as f64);
        confs.push(conf_sum / s.assertions.len() as f64);
    }

    let mut total = 0.0;
    for &f in &faiths {
        total += f;
    }
    let mfg = total / faiths.len() as f64;

    let mut bin_sum = [0.0f64; 10];
    let mut bin_n = [0usize; 10];
    for (&f, &c) in faiths.iter().zip(&confs) {
        let mut bin = 0;
        let mut i = 9;
        loop {
            if c >= i as f64 / 10.0 {
                bin = i;
                break;
            }
            if i == 0 {
                break;
            }
            i -= 1;
        }
        bin_sum[bin] += f;
        bin_n[bin] += 1;
    }
    let mut mean_sum = 0.0;
    let mut occupied = 0usize;
    for b in 0..10 {
        if bin_n[b] > 0 {
            mean_sum += bin_sum[b] / bin_n[b] as f64;
            occupied += 1;
        }
    }
    if occupied == 0 {
        return Err(MetricsError::UndefinedMetric(
            "oracle CMFG with all bins empty".into(),
        ));
    }
    Ok((mfg, mean_sum / occupied as f64))
}
