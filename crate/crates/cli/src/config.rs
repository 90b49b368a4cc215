//! Run configuration: one JSON file describes a full evaluation (dataset,
//! method, models, judge backend, sampling plan, output location). Secrets
//! never appear in the file; HTTP models name an environment variable
//! instead.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use faithcheck_core::canon;
use faithcheck_core::gateway::{Gateway, GatewayConfig, ModelSpec, RetryPolicy};
use faithcheck_core::judging::{
    default_punt_patterns, FixtureStore, HedgeLexicon, Judge, JudgeBackend, JudgePrompts,
    LexiconBackend, RecordingBackend, RemoteBackend, ReplayBackend,
};
use faithcheck_core::methods::{DemoPool, MethodName, MethodSpec};
use faithcheck_core::sampler::SamplePlan;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodConfig {
    pub name: MethodName,
    #[serde(default)]
    pub instruction_text: Option<String>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    /// JSONL demonstration pool, required for uncertainty_plus.
    #[serde(default)]
    pub demo_pool_path: Option<PathBuf>,
}

fn default_m() -> usize {
    2
}

fn default_r() -> usize {
    3
}

impl MethodConfig {
    pub fn to_spec(&self, config_dir: &Path) -> Result<MethodSpec> {
        let mut spec = MethodSpec::new(self.name);
        spec.instruction_text = self.instruction_text.clone();
        spec.m = self.m;
        spec.r = self.r;
        if let Some(path) = &self.demo_pool_path {
            let resolved = resolve(config_dir, path);
            spec.demos = Some(
                DemoPool::load_jsonl(&resolved)
                    .with_context(|| format!("loading demo pool {}", resolved.display()))?,
            );
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum JudgeConfig {
    /// Deterministic offline judge driven by the hedge lexicon file.
    Lexicon { lexicon_path: PathBuf },
    /// Replay of recorded judge exchanges; unrecorded requests fail.
    Replay {
        fixtures_dir: PathBuf,
        #[serde(default)]
        lexicon_path: Option<PathBuf>,
    },
    /// A judge model called through the gateway.
    Remote {
        model: Box<ModelSpec>,
        #[serde(default)]
        decisiveness_prompt_path: Option<PathBuf>,
        #[serde(default)]
        contradiction_prompt_path: Option<PathBuf>,
        #[serde(default)]
        lexicon_path: Option<PathBuf>,
    },
}

impl JudgeConfig {
    pub fn is_offline_capable(&self) -> bool {
        match self {
            Self::Lexicon { .. } | Self::Replay { .. } => true,
            Self::Remote { model, .. } => !model.provider.is_http(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    /// Label used in report tables; defaults to the dataset file stem.
    #[serde(default)]
    pub dataset_label: Option<String>,
    pub method: MethodConfig,
    pub answer_model: ModelSpec,
    pub judge: JudgeConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub offline: bool,
    pub seed: u64,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub retry: Option<RetryPolicy>,
    /// When set, every judge exchange is recorded here for later replay.
    #[serde(default)]
    pub record_judge_fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_temperature")]
    pub sampling_temperature: f64,
}

fn default_k() -> usize {
    20
}

fn default_temperature() -> f64 {
    1.0
}

fn default_pool_size() -> usize {
    8
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            sampling_temperature: default_temperature(),
        }
    }
}

/// Everything a command needs, hydrated from a RunConfig.
pub struct Runtime {
    pub config: RunConfig,
    pub config_dir: PathBuf,
    pub method: MethodSpec,
    pub answer_model: ModelSpec,
    pub plan: SamplePlan,
    pub gateway: std::sync::Arc<Gateway>,
    pub judge: Judge,
    pub dataset_label: String,
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    /// Digest of the run-defining parts of the config (everything except
    /// output and recording locations). Checkpoints refuse to resume under a
    /// different digest.
    pub fn semantic_digest(&self) -> String {
        let value = serde_json::json!({
            "dataset_path": self.dataset_path,
            "method": self.method,
            "answer_model": self.answer_model,
            "judge": self.judge,
            "plan": self.plan,
            "offline": self.offline,
            "seed": self.seed,
        });
        canon::digest(&value)
    }

    pub fn validate(&self) -> Result<()> {
        if self.offline {
            if self.answer_model.provider.is_http() {
                bail!(
                    "offline mode forbids the HTTP answer model {}",
                    self.answer_model.model_name
                );
            }
            if !self.judge.is_offline_capable() {
                bail!("offline mode forbids an HTTP judge model");
            }
        }
        if self.plan.k == 0 {
            bail!("plan.k must be at least 1");
        }
        if !self.plan.sampling_temperature.is_finite() || self.plan.sampling_temperature <= 0.0 {
            bail!("plan.sampling_temperature must be positive");
        }
        if self.pool_size == 0 {
            bail!("pool_size must be at least 1");
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn dataset_label(&self) -> String {
        self.dataset_label.clone().unwrap_or_else(|| {
            self.dataset_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    /// Build the gateway, judge, and hydrated specs. `config_dir` anchors
    /// relative paths in the file.
    pub fn into_runtime(self, config_dir: &Path) -> Result<Runtime> {
        self.validate()?;
        let method = self.method.to_spec(config_dir)?;
        let answer_model = {
            let mut spec = self.answer_model.clone();
            if let Some(p) = &spec.mock_answers_path {
                spec.mock_answers_path = Some(resolve(config_dir, p));
            }
            if let Some(p) = &spec.replay_dir {
                spec.replay_dir = Some(resolve(config_dir, p));
            }
            spec.validated(self.offline)
                .map_err(|e| anyhow::anyhow!("answer model: {e}"))?
        };
        let gateway = std::sync::Arc::new(Gateway::new(
            GatewayConfig::new(self.cache_dir(), self.seed)
                .offline(self.offline)
                .pool_size(self.pool_size)
                .retry(self.retry.unwrap_or_default()),
        ));
        let judge = build_judge(
            &self.judge,
            config_dir,
            &gateway,
            self.offline,
            self.record_judge_fixtures.as_deref(),
        )?;
        let plan = SamplePlan {
            k: self.plan.k,
            sampling_temperature: self.plan.sampling_temperature,
            seed: faithcheck_core::rng::substream(self.seed, "sampling"),
        };
        let dataset_label = self.dataset_label();
        Ok(Runtime {
            config_dir: config_dir.to_path_buf(),
            method,
            answer_model,
            plan,
            gateway,
            judge,
            dataset_label,
            config: self,
        })
    }
}

fn load_lexicon(config_dir: &Path, path: &Path) -> Result<HedgeLexicon> {
    let resolved = resolve(config_dir, path);
    HedgeLexicon::load(&resolved)
        .map_err(|e| anyhow::anyhow!("loading lexicon {}: {e}", resolved.display()))
}

fn build_judge(
    config: &JudgeConfig,
    config_dir: &Path,
    gateway: &std::sync::Arc<Gateway>,
    offline: bool,
    record_dir: Option<&Path>,
) -> Result<Judge> {
    // Punt patterns drive the canned-response rule; they come from the
    // lexicon file when one is configured, with built-in defaults otherwise.
    let backend: Box<dyn JudgeBackend>;
    let punt_patterns;
    match config {
        JudgeConfig::Lexicon { lexicon_path } => {
            let lexicon = load_lexicon(config_dir, lexicon_path)?;
            punt_patterns = lexicon.punt_patterns().to_vec();
            backend = Box::new(LexiconBackend::new(lexicon));
        }
        JudgeConfig::Replay {
            fixtures_dir,
            lexicon_path,
        } => {
            let store = FixtureStore::open(resolve(config_dir, fixtures_dir))
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            punt_patterns = match lexicon_path {
                Some(p) => load_lexicon(config_dir, p)?.punt_patterns().to_vec(),
                None => default_punt_patterns(),
            };
            backend = Box::new(ReplayBackend::new(store));
        }
        JudgeConfig::Remote {
            model,
            decisiveness_prompt_path,
            contradiction_prompt_path,
            lexicon_path,
        } => {
            let spec = (**model)
                .clone()
                .validated(offline)
                .map_err(|e| anyhow::anyhow!("judge model: {e}"))?;
            let prompts = match (decisiveness_prompt_path, contradiction_prompt_path) {
                (Some(d), Some(c)) => {
                    JudgePrompts::from_files(&resolve(config_dir, d), &resolve(config_dir, c))
                        .map_err(|e| anyhow::anyhow!("{e}"))?
                }
                (None, None) => JudgePrompts::builtin(),
                _ => bail!("set both judge prompt paths or neither"),
            };
            punt_patterns = match lexicon_path {
                Some(p) => load_lexicon(config_dir, p)?.punt_patterns().to_vec(),
                None => default_punt_patterns(),
            };
            backend = Box::new(RemoteBackend::new(gateway.clone(), spec, prompts));
        }
    }

    let backend: std::sync::Arc<dyn JudgeBackend> = match record_dir {
        Some(dir) => {
            let store = FixtureStore::create(dir).map_err(|e| anyhow::anyhow!("{e}"))?;
            std::sync::Arc::new(RecordingBackend::new(BoxedBackend(backend), store))
        }
        None => std::sync::Arc::from(backend),
    };
    Ok(Judge::new(backend, punt_patterns))
}

/// Adapter so a boxed backend can sit inside the recording wrapper.
struct BoxedBackend(Box<dyn JudgeBackend>);

impl JudgeBackend for BoxedBackend {
    fn raw_reply(
        &self,
        request: &faithcheck_core::judging::JudgeRequest,
        attempt: u32,
    ) -> std::result::Result<String, faithcheck_core::judging::JudgeError> {
        self.0.raw_reply(request, attempt)
    }

    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn is_deterministic(&self) -> bool {
        self.0.is_deterministic()
    }
}
