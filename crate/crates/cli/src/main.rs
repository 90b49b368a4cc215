use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use faithcheck_cli::pipeline::{
    self, BuildDemosOptions, ConvertOptions, DatasetFormat, EvaluateOptions, SimulateOptions,
};

/// Batch evaluation of whether a QA model hedges in proportion to its
/// measured uncertainty.
#[derive(Parser)]
#[command(name = "faithcheck", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full evaluation and write reports into the output directory.
    Evaluate {
        /// Run configuration file (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Forbid all network calls (mock/replay providers only).
        #[arg(long)]
        offline: bool,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Consume an existing checkpoint instead of starting fresh.
        #[arg(long)]
        resume: bool,
    },
    /// Score answer accuracy against gold answers for an existing run.
    Accuracy {
        #[arg(long)]
        config: PathBuf,
        /// Run directory holding examples.jsonl (defaults to the configured
        /// output directory).
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Generate synthetic (decisiveness, confidence) populations and verify
    /// the metric stack against a brute-force oracle.
    Simulate {
        /// decisive | random | faithful | anti-faithful | noisy_faithful:SIGMA
        #[arg(long)]
        policy: String,
        /// uniform | beta:A,B | point:V | two_point:V1,V2,P
        #[arg(long, default_value = "uniform")]
        dist: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds to run.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Write population and metric CSVs here.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Build an in-context demonstration pool from trivia questions.
    BuildDemos {
        #[arg(long)]
        config: PathBuf,
        /// Trivia questions in the canonical JSONL schema.
        #[arg(long)]
        trivia: PathBuf,
        /// Demo pool output path (default: <output_dir>/demo_pool.jsonl).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Human-edit queue path (default: <output_dir>/rewrite_queue.jsonl).
        #[arg(long)]
        queue: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        certain: usize,
        #[arg(long, default_value_t = 10)]
        uncertain: usize,
        /// Lexicon used to propose hedged rewrites (defaults to the judge's).
        #[arg(long)]
        rewrite_lexicon: Option<PathBuf>,
    },
    /// Convert a raw dataset into the canonical JSONL schema.
    ConvertDataset {
        #[arg(long)]
        input: PathBuf,
        /// popqa-tsv | ambig-qa | canonical
        #[arg(long)]
        format: DatasetFormat,
        #[arg(long)]
        output: PathBuf,
        /// Apply the entity-QA preprocessing filter.
        #[arg(long)]
        popqa_filter: bool,
        /// Comma-separated relation whitelist (defaults to the standard six).
        #[arg(long, value_delimiter = ',')]
        relations: Option<Vec<String>>,
        #[arg(long, default_value_t = 2)]
        min_entity_chars: usize,
        /// Seeded uniform subsample size after filtering.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop items flagged ambiguous.
        #[arg(long)]
        exclude_ambiguous: bool,
    },
    /// Rebuild reports from an existing run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Evaluate {
            config,
            offline,
            seed,
            output_dir,
            resume,
        } => {
            let doc = pipeline::cmd_evaluate(&EvaluateOptions {
                config_path: config,
                offline,
                seed,
                output_dir,
                resume,
            })?;
            println!(
                "evaluated {} ({} on {}): mfg {:.4}, cmfg {:.4}, punt rate {:.4} over {} run(s)",
                doc.dataset,
                doc.method,
                doc.model,
                doc.mean.mfg,
                doc.mean.cmfg,
                doc.mean.punt_rate,
                doc.runs.len()
            );
            for run in &doc.runs {
                println!(
                    "  run {}: n={} punted={} unscorable={} mfg={:.4} cmfg={:.4}",
                    run.run_index, run.n_total, run.n_punted, run.n_unscorable, run.mfg, run.cmfg
                );
            }
        }
        Command::Accuracy { config, run_dir } => {
            let report = pipeline::cmd_accuracy(&config, run_dir.as_deref())?;
            println!(
                "accuracy {:.4} (exact match {:.4}) over {} examples ({} punted, {} unscorable excluded)",
                report.accuracy,
                report.exact_match,
                report.n_evaluated,
                report.n_punted,
                report.n_unscorable
            );
        }
        Command::Simulate {
            policy,
            dist,
            n,
            seed,
            seeds,
            output_dir,
        } => {
            let summary = pipeline::cmd_simulate(&SimulateOptions {
                policy,
                dist,
                n,
                seed,
                seeds,
                output_dir,
            })?;
            for result in &summary.per_seed {
                println!(
                    "seed {}: mfg {:.4}, cmfg {:.4} (oracle agreed)",
                    result.seed, result.mfg, result.cmfg
                );
            }
            if summary.per_seed.len() > 1 {
                println!(
                    "mean cmfg over {} seeds: {:.4}",
                    summary.per_seed.len(),
                    summary.mean_cmfg
                );
            }
        }
        Command::BuildDemos {
            config,
            trivia,
            output,
            queue,
            certain,
            uncertain,
            rewrite_lexicon,
        } => {
            let outcome = pipeline::cmd_build_demos(&BuildDemosOptions {
                config_path: config,
                trivia_path: trivia,
                output,
                queue,
                certain,
                uncertain,
                rewrite_lexicon,
            })?;
            println!(
                "demo pool built: {} certain + {} uncertain (from {} answered, {} punted); {} rewrite(s) queued for human editing",
                outcome.pool.certain.len(),
                outcome.pool.uncertain.len(),
                outcome.answered,
                outcome.punted,
                outcome.queued.len()
            );
        }
        Command::ConvertDataset {
            input,
            format,
            output,
            popqa_filter,
            relations,
            min_entity_chars,
            subsample,
            seed,
            exclude_ambiguous,
        } => {
            let count = pipeline::cmd_convert_dataset(&ConvertOptions {
                input,
                format,
                output: output.clone(),
                apply_popqa_filter: popqa_filter,
                relations,
                min_entity_chars,
                subsample,
                seed,
                drop_ambiguous: exclude_ambiguous,
            })?;
            println!("wrote {count} item(s) to {}", output.display());
        }
        Command::Report { run_dir } => {
            let doc = pipeline::cmd_report(&run_dir)?;
            println!(
                "rebuilt reports in {}: mfg {:.4}, cmfg {:.4}",
                run_dir.display(),
                doc.mean.mfg,
                doc.mean.cmfg
            );
        }
    }
    Ok(())
}
