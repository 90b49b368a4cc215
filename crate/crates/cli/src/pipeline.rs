//! Command implementations behind the CLI surface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};

use faithcheck_core::datasets::{self, PopqaFilterOptions, QaItem};
use faithcheck_core::harness::{
    self, compute_accuracy, read_examples_jsonl, AccuracyReport, CheckpointLog, EvalExample,
    EvaluationSettings, MethodRun,
};
use faithcheck_core::judging::HedgeLexicon;
use faithcheck_core::methods::{craft_demo_pool, write_rewrite_queue, DemoCraftOutcome};
use faithcheck_core::simlab::{self, metric_oracle, ConfidenceDist, Policy, SyntheticAgent};
use faithcheck_core::{metrics, MetricsReport};

use crate::config::RunConfig;
use crate::outputs::{self, MetricsDocument, RunMeta};
use crate::schema;

pub struct EvaluateOptions {
    pub config_path: PathBuf,
    pub offline: bool,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub resume: bool,
}

fn config_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_config(
    options_path: &Path,
    offline: bool,
    seed: Option<u64>,
    output_dir: Option<&Path>,
) -> Result<RunConfig> {
    let mut config = RunConfig::load(options_path)?;
    if offline {
        config.offline = true;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(dir) = output_dir {
        config.output_dir = dir.to_path_buf();
    }
    Ok(config)
}

fn load_eval_items(config: &RunConfig, dir: &Path) -> Result<Vec<QaItem>> {
    let path = if config.dataset_path.is_absolute() {
        config.dataset_path.clone()
    } else {
        dir.join(&config.dataset_path)
    };
    let items = datasets::load_jsonl(&path)?;
    let before = items.len();
    let items = datasets::exclude_ambiguous(items);
    if items.len() < before {
        eprintln!(
            "note: excluded {} ambiguous question(s); {} remain",
            before - items.len(),
            items.len()
        );
    }
    if items.is_empty() {
        bail!("dataset {} has no unambiguous questions", path.display());
    }
    Ok(items)
}

/// Run the full pipeline and write every artifact into the output dir.
pub fn cmd_evaluate(options: &EvaluateOptions) -> Result<MetricsDocument> {
    let started = Instant::now();
    let dir = config_dir(&options.config_path);
    let config = load_config(
        &options.config_path,
        options.offline,
        options.seed,
        options.output_dir.as_deref(),
    )?;
    let digest = config.semantic_digest();
    let runtime = config.into_runtime(&dir)?;
    let out_dir = runtime.config.output_dir.clone();
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;

    let items = load_eval_items(&runtime.config, &dir)?;

    let checkpoint_path = out_dir.join("checkpoint.jsonl");
    if !options.resume && checkpoint_path.exists() {
        std::fs::remove_file(&checkpoint_path)
            .with_context(|| format!("clearing stale checkpoint {}", checkpoint_path.display()))?;
    }
    let mut checkpoint = CheckpointLog::open(&checkpoint_path, &digest)?;
    if options.resume && checkpoint.completed_count() > 0 {
        eprintln!(
            "resuming: {} example(s) already completed",
            checkpoint.completed_count()
        );
    }

    let settings = EvaluationSettings {
        method: runtime.method.clone(),
        answer_model: runtime.answer_model.clone(),
        plan: runtime.plan,
        seed: runtime.config.seed,
        model_label: runtime.answer_model.model_name.clone(),
    };
    let runs = harness::run_evaluation(
        &runtime.gateway,
        &runtime.judge,
        &settings,
        &items,
        Some(&mut checkpoint),
    )?;

    harness::write_examples_jsonl(&out_dir.join("examples.jsonl"), &runs)?;

    let doc = outputs::summarize(
        &runtime.dataset_label,
        runtime.method.name.as_str(),
        &settings.model_label,
        runtime.config.seed,
        runtime.plan.k,
        &runs,
    )?;
    schema::validate_or_err(
        schema::METRICS_SCHEMA,
        &serde_json::to_value(&doc)?,
        "metrics.json",
    )?;
    outputs::write_pretty_json(&out_dir.join("metrics.json"), &doc)?;
    outputs::write_bins_csv(&out_dir.join("bins.csv"), &runs)?;
    outputs::upsert_table_csv(&out_dir.join("table.csv"), &doc)?;
    outputs::upsert_means_csv(&out_dir.join("means.csv"), &doc)?;

    let meta = RunMeta {
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        duration_ms: started.elapsed().as_millis() as u64,
        config_digest: digest,
        dataset: runtime.dataset_label.clone(),
        k: runtime.plan.k,
        seed: runtime.config.seed,
        gateway: runtime.gateway.stats(),
        config: serde_json::to_value(&runtime.config)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    outputs::write_pretty_json(&out_dir.join("run-meta.json"), &meta)?;
    Ok(doc)
}

/// Judge-based accuracy over an existing run's examples.
pub fn cmd_accuracy(config_path: &Path, run_dir: Option<&Path>) -> Result<AccuracyReport> {
    let dir = config_dir(config_path);
    let config = RunConfig::load(config_path)?;
    let runtime = config.into_runtime(&dir)?;
    let out_dir = run_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| runtime.config.output_dir.clone());
    let examples = read_examples_jsonl(&out_dir.join("examples.jsonl"))?;
    let items = load_eval_items(&runtime.config, &dir)?;
    let gold: BTreeMap<String, Vec<String>> =
        items.into_iter().map(|i| (i.id, i.gold_answers)).collect();
    let report = compute_accuracy(&runtime.judge, &examples, &gold)?;
    schema::validate_or_err(
        schema::ACCURACY_SCHEMA,
        &serde_json::to_value(report)?,
        "accuracy.json",
    )?;
    outputs::write_pretty_json(&out_dir.join("accuracy.json"), &report)?;
    Ok(report)
}

/// Rebuild metrics.json and the CSV artifacts from an existing run's
/// examples.jsonl (run-meta.json supplies the labels).
pub fn cmd_report(run_dir: &Path) -> Result<MetricsDocument> {
    let meta_text = std::fs::read_to_string(run_dir.join("run-meta.json"))
        .with_context(|| format!("reading {}/run-meta.json", run_dir.display()))?;
    let meta: RunMeta = serde_json::from_str(&meta_text).context("parsing run-meta.json")?;
    let examples = read_examples_jsonl(&run_dir.join("examples.jsonl"))?;
    if examples.is_empty() {
        bail!("{} has no examples", run_dir.display());
    }
    let (method, model) = (examples[0].method.clone(), examples[0].model.clone());

    let mut by_run: BTreeMap<usize, Vec<EvalExample>> = BTreeMap::new();
    for example in examples {
        by_run.entry(example.run_index).or_default().push(example);
    }
    let runs: Vec<MethodRun> = by_run
        .into_iter()
        .map(|(run_index, examples)| MethodRun {
            run_index,
            demo_seed: 0,
            examples,
        })
        .collect();

    let doc = outputs::summarize(&meta.dataset, &method, &model, meta.seed, meta.k, &runs)?;
    schema::validate_or_err(
        schema::METRICS_SCHEMA,
        &serde_json::to_value(&doc)?,
        "metrics.json",
    )?;
    outputs::write_pretty_json(&run_dir.join("metrics.json"), &doc)?;
    outputs::write_bins_csv(&run_dir.join("bins.csv"), &runs)?;
    outputs::upsert_table_csv(&run_dir.join("table.csv"), &doc)?;
    outputs::upsert_means_csv(&run_dir.join("means.csv"), &doc)?;
    Ok(doc)
}

pub struct SimulateOptions {
    pub policy: String,
    pub dist: String,
    pub n: usize,
    pub seed: u64,
    pub seeds: usize,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SimulateSeedResult {
    pub seed: u64,
    pub mfg: f64,
    pub cmfg: f64,
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub per_seed: Vec<SimulateSeedResult>,
    pub mean_cmfg: f64,
}

pub fn parse_policy(text: &str) -> Result<Policy> {
    let normalized = text.to_lowercase().replace('-', "_");
    let mut parts = normalized.splitn(2, ':');
    let name = parts.next().unwrap_or_default();
    let arg = parts.next();
    Ok(match (name, arg) {
        ("decisive", None) => Policy::Decisive,
        ("random", None) | ("random_uniform", None) => Policy::Random,
        ("faithful", None) => Policy::Faithful,
        ("anti_faithful", None) => Policy::AntiFaithful,
        ("noisy_faithful", Some(sigma)) => Policy::NoisyFaithful {
            sigma: sigma.parse().context("noisy_faithful sigma")?,
        },
        ("noisy_faithful", None) => bail!("noisy_faithful needs a sigma, e.g. noisy_faithful:0.2"),
        _ => bail!(
            "unknown policy {text:?} (try decisive, random, faithful, anti-faithful, noisy_faithful:SIGMA)"
        ),
    })
}

pub fn parse_dist(text: &str) -> Result<ConfidenceDist> {
    let normalized = text.to_lowercase().replace('-', "_");
    let mut parts = normalized.splitn(2, ':');
    let name = parts.next().unwrap_or_default();
    let args: Vec<f64> = parts
        .next()
        .map(|rest| {
            rest.split(',')
                .map(|a| a.trim().parse::<f64>().context("distribution argument"))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?
        .unwrap_or_default();
    Ok(match (name, args.as_slice()) {
        ("uniform", []) => ConfidenceDist::Uniform,
        ("beta", [a, b]) => ConfidenceDist::Beta { a: *a, b: *b },
        ("point", [v]) => ConfidenceDist::Point { v: *v },
        ("two_point", [v1, v2, p]) => ConfidenceDist::TwoPoint {
            v1: *v1,
            v2: *v2,
            p: *p,
        },
        _ => bail!(
            "unknown distribution {text:?} (try uniform, beta:A,B, point:V, two_point:V1,V2,P)"
        ),
    })
}

/// Simulate synthetic-agent populations and cross-check the metric stack
/// against the brute-force oracle on every seed.
pub fn cmd_simulate(options: &SimulateOptions) -> Result<SimulateSummary> {
    let policy = parse_policy(&options.policy)?;
    let dist = parse_dist(&options.dist)?;
    if options.n == 0 || options.seeds == 0 {
        bail!("simulate needs n >= 1 and at least one seed");
    }
    if let Some(dir) = &options.output_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut per_seed = Vec::with_capacity(options.seeds);
    let mut metrics_rows = String::from("seed,policy,dist,n,mfg,cmfg,oracle_mfg,oracle_cmfg\n");
    for offset in 0..options.seeds {
        let seed = options.seed + offset as u64;
        let agent = SyntheticAgent::new(dist, policy, options.n, seed);
        let population = simlab::simulate(&agent);
        let mfg = metrics::mfg(&population)?;
        let breakdown = metrics::cmfg(&population)?;
        let (oracle_mfg, oracle_cmfg) = metric_oracle(&population)?;
        if (oracle_mfg - mfg).abs() > 1e-9 || (oracle_cmfg - breakdown.cmfg).abs() > 1e-9 {
            bail!(
                "metric stack disagrees with the brute-force oracle at seed {seed}: \
                 mfg {mfg} vs {oracle_mfg}, cmfg {} vs {oracle_cmfg}",
                breakdown.cmfg
            );
        }
        metrics_rows.push_str(&format!(
            "{seed},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            options.policy, options.dist, options.n, mfg, breakdown.cmfg, oracle_mfg, oracle_cmfg
        ));
        if let Some(dir) = &options.output_dir {
            let mut rows = String::from("index,confidence,decisiveness,faithfulness\n");
            for (i, score) in population.iter().enumerate() {
                let (dec, conf) = score.assertions[0];
                rows.push_str(&format!(
                    "{i},{conf:.6},{dec:.6},{:.6}\n",
                    score.faithfulness
                ));
            }
            std::fs::write(dir.join(format!("population-{seed}.csv")), rows)?;
        }
        per_seed.push(SimulateSeedResult {
            seed,
            mfg,
            cmfg: breakdown.cmfg,
        });
    }
    if let Some(dir) = &options.output_dir {
        std::fs::write(dir.join("metrics.csv"), &metrics_rows)?;
    }
    let mean_cmfg = metrics::compensated_mean(per_seed.iter().map(|r| r.cmfg)).unwrap_or(0.0);
    Ok(SimulateSummary {
        per_seed,
        mean_cmfg,
    })
}

pub struct BuildDemosOptions {
    pub config_path: PathBuf,
    pub trivia_path: PathBuf,
    pub output: Option<PathBuf>,
    pub queue: Option<PathBuf>,
    pub certain: usize,
    pub uncertain: usize,
    pub rewrite_lexicon: Option<PathBuf>,
}

/// Build an in-context demonstration pool from trivia questions.
pub fn cmd_build_demos(options: &BuildDemosOptions) -> Result<DemoCraftOutcome> {
    let dir = config_dir(&options.config_path);
    let config = RunConfig::load(&options.config_path)?;
    let runtime = config.into_runtime(&dir)?;
    std::fs::create_dir_all(&runtime.config.output_dir)?;

    let lexicon_path = options
        .rewrite_lexicon
        .clone()
        .or_else(|| match &runtime.config.judge {
            crate::config::JudgeConfig::Lexicon { lexicon_path } => Some(lexicon_path.clone()),
            crate::config::JudgeConfig::Replay { lexicon_path, .. }
            | crate::config::JudgeConfig::Remote { lexicon_path, .. } => lexicon_path.clone(),
        })
        .context("no rewrite lexicon: pass --rewrite-lexicon or configure one on the judge")?;
    let lexicon_path = if lexicon_path.is_absolute() {
        lexicon_path
    } else {
        dir.join(lexicon_path)
    };
    let lexicon = HedgeLexicon::load(&lexicon_path).map_err(|e| anyhow::anyhow!("{e}"))?;

    let trivia = datasets::load_jsonl(&options.trivia_path)?;
    let outcome = craft_demo_pool(
        &runtime.gateway,
        &runtime.answer_model,
        &runtime.judge,
        &trivia,
        (options.certain, options.uncertain),
        &lexicon,
        &runtime.plan,
        runtime.config.seed,
    )?;

    let pool_path = options
        .output
        .clone()
        .unwrap_or_else(|| runtime.config.output_dir.join("demo_pool.jsonl"));
    outcome.pool.write_jsonl(&pool_path)?;
    let queue_path = options
        .queue
        .clone()
        .unwrap_or_else(|| runtime.config.output_dir.join("rewrite_queue.jsonl"));
    write_rewrite_queue(&queue_path, &outcome.queued)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    PopqaTsv,
    AmbigQa,
    Canonical,
}

impl std::str::FromStr for DatasetFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().replace('_', "-").as_str() {
            "popqa-tsv" | "popqa" => Ok(Self::PopqaTsv),
            "ambig-qa" | "ambignq" => Ok(Self::AmbigQa),
            "canonical" | "jsonl" => Ok(Self::Canonical),
            other => bail!("unknown dataset format {other:?} (popqa-tsv, ambig-qa, canonical)"),
        }
    }
}

pub struct ConvertOptions {
    pub input: PathBuf,
    pub format: DatasetFormat,
    pub output: PathBuf,
    pub apply_popqa_filter: bool,
    pub relations: Option<Vec<String>>,
    pub min_entity_chars: usize,
    pub subsample: Option<usize>,
    pub seed: u64,
    pub drop_ambiguous: bool,
}

/// Convert a raw dataset into the canonical JSONL schema, with optional
/// filtering and seeded subsampling.
pub fn cmd_convert_dataset(options: &ConvertOptions) -> Result<usize> {
    let file = std::fs::File::open(&options.input)
        .with_context(|| format!("opening {}", options.input.display()))?;
    let mut items = match options.format {
        DatasetFormat::PopqaTsv => datasets::convert_popqa_tsv(file)?,
        DatasetFormat::AmbigQa => datasets::convert_ambig_qa(file)?,
        DatasetFormat::Canonical => datasets::load_jsonl(&options.input)?,
    };
    if options.drop_ambiguous {
        items = datasets::exclude_ambiguous(items);
    }
    if options.apply_popqa_filter || options.subsample.is_some() {
        let mut filter_options = PopqaFilterOptions {
            subsample_n: options.subsample,
            seed: options.seed,
            min_entity_chars: options.min_entity_chars,
            ..Default::default()
        };
        if let Some(relations) = &options.relations {
            filter_options.allowed_relations = relations.clone();
        }
        items = datasets::popqa_filter(items, &filter_options)?;
    }
    datasets::write_jsonl(&options.output, &items)?;
    Ok(items.len())
}

/// Recompute a metrics report from example records (shared by tests).
pub fn metrics_from_examples(examples: &[EvalExample]) -> Result<MetricsReport> {
    let (scores, _) = harness::collect_scores(examples);
    Ok(MetricsReport::compute(&scores)?)
}
