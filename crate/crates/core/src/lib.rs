//! faithcheck-core: does a model's hedging match its actual uncertainty?
//!
//! A response to a factual question carries two signals: how decisively it
//! is worded, and how confident the model really is (measured by resampling
//! the question and counting contradictions). Faithfulness is one minus the
//! mean absolute gap between the two. This crate provides the metric stack
//! (per-example faithfulness, MFG, CMFG over confidence bins), the judging
//! backends that extract and score assertions, the sampling machinery, a
//! model gateway with caching and replay, dataset ingestion, the prompting
//! methods under evaluation, and a synthetic-agent lab for validating the
//! metrics without any model in the loop.

pub mod canon;
pub mod datasets;
pub mod gateway;
pub mod harness;
pub mod judging;
pub mod methods;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod simlab;

pub use harness::{EvalExample, ExampleOutcome, MethodRun, PipelineError};
pub use metrics::{Assertion, ConfidenceReport, ExampleScore, MetricsError, MetricsReport};
pub use sampler::{SamplePlan, SampledAnswerSet};
