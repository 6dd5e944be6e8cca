//! Run configuration: the JSON schema shared by the CLI and the library,
//! its validation rules, canonical hashing, and assembly into a ready
//! pipeline context.
//!
//! Credentials never appear in the file: an HTTP endpoint names the
//! environment variable holding its API key, and the key is read at client
//! construction only — nothing secret is ever serialized into a run
//! directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::artifact::{validate_metadata, validate_name};
use crate::gateway::{
    AgentRole, ChatProvider, HttpProvider, ProviderEndpoint, ProviderError, ProviderHub,
    RequestDefaults, RolloutOptions, ScriptedAgentBehavior, ScriptedAuxBehavior,
};
use crate::induction::{HashEmbedder, InductionConfig};
use crate::model::{Evaluator, EvaluatorKind, EvaluatorSpec, TaskInstance};
use crate::pipeline::PipelineContext;
use crate::stats::GateConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse at {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {message}")]
    Invalid { message: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        message: message.into(),
    }
}

/// One model behind an agent id: a live HTTP endpoint or an offline scripted
/// double. The scripted variants make a fully offline run expressible as
/// plain configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "kebab-case")]
pub enum AgentConfig {
    /// Chat-completions endpoint; `api_key_env` names the environment
    /// variable holding the credential.
    Http(ProviderEndpoint),
    /// Scripted task-solving agent.
    ScriptedAgent {
        #[serde(default = "default_scripted_label")]
        model_label: String,
        behavior: ScriptedAgentBehavior,
    },
    /// Scripted auxiliary (summaries, generation, refinement, feedback).
    ScriptedAux {
        #[serde(default = "default_scripted_label")]
        model_label: String,
        behavior: ScriptedAuxBehavior,
    },
}

fn default_scripted_label() -> String {
    "scripted".to_string()
}

impl AgentConfig {
    /// Per-call defaults recorded in the token ledger.
    pub fn request_defaults(&self) -> RequestDefaults {
        match self {
            AgentConfig::Http(endpoint) => RequestDefaults {
                model: endpoint.model_name.clone(),
                temperature: endpoint.temperature,
                max_tokens: endpoint.max_output_tokens,
            },
            AgentConfig::ScriptedAgent { model_label, .. }
            | AgentConfig::ScriptedAux { model_label, .. } => RequestDefaults {
                model: model_label.clone(),
                temperature: 0.0,
                max_tokens: 4096,
            },
        }
    }

    /// Human-readable model name for reports.
    pub fn model_name(&self) -> &str {
        match self {
            AgentConfig::Http(endpoint) => &endpoint.model_name,
            AgentConfig::ScriptedAgent { model_label, .. }
            | AgentConfig::ScriptedAux { model_label, .. } => model_label,
        }
    }

    /// Builds the provider client. For HTTP endpoints this reads the API key
    /// from the named environment variable; a missing credential surfaces as
    /// a provider failure, not a config error.
    pub fn build_provider(&self) -> Result<Arc<dyn ChatProvider>, ProviderError> {
        match self {
            AgentConfig::Http(endpoint) => Ok(Arc::new(HttpProvider::new(endpoint.clone())?)),
            AgentConfig::ScriptedAgent { behavior, .. } => Ok(Arc::new(behavior.clone())),
            AgentConfig::ScriptedAux { behavior, .. } => Ok(Arc::new(behavior.clone())),
        }
    }

    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if let AgentConfig::Http(endpoint) = self {
            endpoint
                .validate()
                .map_err(|message| invalid(format!("{field}: {message}")))?;
        }
        Ok(())
    }
}

/// Dataset split parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Fraction of the pool assigned to the induction subset.
    pub ratio: f64,
    /// Minimum verification-subset size.
    pub min_verification: usize,
    /// Run root seed; every stage seed derives from it.
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratio: 0.7,
            min_verification: 4,
            seed: 42,
        }
    }
}

/// Contrastive-induction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InductionParams {
    pub target_cluster_size: usize,
    pub kmin: usize,
    pub kmax: usize,
    pub max_clusters: usize,
    pub contrast_cap: usize,
    pub abs_sample_cap: usize,
    pub summ_triple_cap: usize,
}

impl Default for InductionParams {
    fn default() -> Self {
        let d = InductionConfig::default();
        Self {
            target_cluster_size: d.target_cluster_size,
            kmin: d.kmin,
            kmax: d.kmax,
            max_clusters: d.max_clusters,
            contrast_cap: d.contrast_cap,
            abs_sample_cap: d.abs_sample_cap,
            summ_triple_cap: d.summ_triple_cap,
        }
    }
}

/// How much diagnostic material generation prompts expose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExposureConfig {
    pub failure_clusters: usize,
    pub success_clusters: usize,
    pub contrasts: usize,
}

impl Default for ExposureConfig {
    fn default() -> Self {
        Self {
            failure_clusters: 6,
            success_clusters: 6,
            contrasts: 8,
        }
    }
}

/// Generation–verification–refinement loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Refinement budget K (round 1 generates, rounds 2..=K refine).
    pub rounds: u32,
    pub gate_abs: u64,
    pub gate_rel: f64,
    /// Baseline-success instances watched by the regression guard.
    pub guard_cap: usize,
    /// Instances sampled per feedback bucket.
    pub feedback_sample_cap: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        let gate = GateConfig::default();
        Self {
            rounds: 8,
            gate_abs: gate.g_abs,
            gate_rel: gate.g_rel,
            guard_cap: 30,
            feedback_sample_cap: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkersConfig {
    /// Rollout/summarization parallelism.
    pub pipeline: usize,
    /// Feedback-explanation parallelism.
    pub feedback: usize,
}

impl Default for WorkersConfig {
    fn default() -> Self {
        Self {
            pipeline: 4,
            feedback: 8,
        }
    }
}

/// File inputs. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    /// JSON array of task instances forming the training pool.
    pub instances: PathBuf,
    /// JSON array of held-out task instances for paired evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_instances: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub step_cap: u32,
    pub system_prompt: String,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            step_cap: 30,
            system_prompt: "You are a careful task-solving agent.".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Output-token budget for skill generation and refinement calls.
    pub max_tokens: u64,
    /// Character cap on the three-section skill body.
    pub body_char_cap: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_tokens: 16384,
            body_char_cap: 16000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

/// An executing agent in a transfer study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAgent {
    pub id: String,
    #[serde(flatten)]
    pub agent: AgentConfig,
}

/// A completed run whose selected skill enters the transfer matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSource {
    pub label: String,
    pub run_dir: PathBuf,
}

/// Cross-model transfer study: sources × evaluators on one shared held-out
/// pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub test_instances: PathBuf,
    pub evaluators: Vec<NamedAgent>,
    pub sources: Vec<TransferSource>,
}

/// The complete run configuration. Every default is overridable; the loaded
/// file is serialized into the run directory with its hash recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub benchmark: String,
    /// The task-solving agent being improved.
    pub agent: AgentConfig,
    /// The single fixed auxiliary model used for every analysis role.
    pub auxiliary: AgentConfig,
    pub evaluator: EvaluatorSpec,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub induction: InductionParams,
    #[serde(default)]
    pub exposure: ExposureConfig,
    #[serde(default, rename = "loop")]
    pub refinement: LoopConfig,
    #[serde(default)]
    pub workers: WorkersConfig,
    pub paths: PathsConfig,
    #[serde(default)]
    pub rollout: RolloutConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default = "default_skill_name")]
    pub skill_name: String,
    /// Extra single-line metadata baked into the skill artifact.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferConfig>,
}

fn default_skill_name() -> String {
    "synthesized-skill".to_string()
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.benchmark.is_empty() {
            return Err(invalid("benchmark must be non-empty"));
        }
        self.agent.validate("agent")?;
        self.auxiliary.validate("auxiliary")?;
        if matches!(self.agent, AgentConfig::ScriptedAux { .. }) {
            return Err(invalid(
                "agent: scripted-aux cannot solve tasks; use provider http or scripted-agent",
            ));
        }
        if matches!(self.auxiliary, AgentConfig::ScriptedAgent { .. }) {
            return Err(invalid(
                "auxiliary: scripted-agent cannot analyze rollouts; use provider http or scripted-aux",
            ));
        }
        match self.evaluator.kind {
            EvaluatorKind::JudgePrompted | EvaluatorKind::EnvironmentCallback => {
                return Err(invalid(
                    "evaluator: judge-prompted and environment-callback evaluators need a \
                     runtime client wired in through the library API and cannot be built \
                     from configuration alone",
                ));
            }
            EvaluatorKind::ExactMatch { .. } | EvaluatorKind::ScriptedTestDouble { .. } => {}
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(invalid(format!(
                "split.ratio must lie strictly between 0 and 1, got {}",
                self.split.ratio
            )));
        }
        if self.split.min_verification == 0 {
            return Err(invalid("split.min_verification must be at least 1"));
        }
        let ind = &self.induction;
        if ind.kmin == 0 || ind.kmin > ind.kmax {
            return Err(invalid(format!(
                "induction requires 1 <= kmin <= kmax, got kmin={} kmax={}",
                ind.kmin, ind.kmax
            )));
        }
        if ind.target_cluster_size == 0 {
            return Err(invalid("induction.target_cluster_size must be positive"));
        }
        if ind.max_clusters == 0 {
            return Err(invalid("induction.max_clusters must be positive"));
        }
        if self.refinement.rounds == 0 {
            return Err(invalid("loop.rounds must be at least 1"));
        }
        if !self.refinement.gate_rel.is_finite()
            || self.refinement.gate_rel < 0.0
            || self.refinement.gate_rel > 1.0
        {
            return Err(invalid(format!(
                "loop.gate_rel must lie in [0, 1], got {}",
                self.refinement.gate_rel
            )));
        }
        if self.workers.pipeline == 0 || self.workers.feedback == 0 {
            return Err(invalid("workers.pipeline and workers.feedback must be positive"));
        }
        if self.rollout.step_cap == 0 {
            return Err(invalid("rollout.step_cap must be positive"));
        }
        if self.generation.max_tokens == 0 {
            return Err(invalid("generation.max_tokens must be positive"));
        }
        if self.generation.body_char_cap == 0 {
            return Err(invalid("generation.body_char_cap must be positive"));
        }
        if self.embedding.dim == 0 {
            return Err(invalid("embedding.dim must be positive"));
        }
        validate_name(&self.skill_name)
            .map_err(|e| invalid(format!("skill_name: {e}")))?;
        validate_metadata(&self.metadata).map_err(|e| invalid(format!("metadata: {e}")))?;
        if let Some(transfer) = &self.transfer {
            if transfer.evaluators.is_empty() {
                return Err(invalid("transfer.evaluators must be non-empty"));
            }
            if transfer.sources.is_empty() {
                return Err(invalid("transfer.sources must be non-empty"));
            }
            let mut ids = BTreeSet::new();
            for named in &transfer.evaluators {
                if named.id.is_empty() {
                    return Err(invalid("transfer.evaluators entries need non-empty ids"));
                }
                if !ids.insert(&named.id) {
                    return Err(invalid(format!(
                        "transfer.evaluators has duplicate id {}",
                        named.id
                    )));
                }
                named.agent.validate("transfer.evaluators")?;
                if matches!(named.agent, AgentConfig::ScriptedAux { .. }) {
                    return Err(invalid(format!(
                        "transfer.evaluators entry {} cannot be a scripted-aux",
                        named.id
                    )));
                }
            }
            let mut labels = BTreeSet::new();
            for source in &transfer.sources {
                if source.label.is_empty() {
                    return Err(invalid("transfer.sources entries need non-empty labels"));
                }
                if !labels.insert(&source.label) {
                    return Err(invalid(format!(
                        "transfer.sources has duplicate label {}",
                        source.label
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Canonical content hash of a JSON value: sha256 over compact serialization
/// with sorted object keys (the serializer's native order).
pub fn canonical_hash(value: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(value).expect("JSON values serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// A parsed and validated config plus the context needed to use it: the
/// directory its relative paths resolve against, its canonical hash, and the
/// exact JSON recorded into run directories.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub hash: String,
    pub json: serde_json::Value,
}

/// Loads, parses, and validates a config file.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    config.validate()?;
    let base_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let json = serde_json::to_value(&config).expect("configs serialize");
    let hash = canonical_hash(&json);
    Ok(LoadedConfig {
        config,
        base_dir,
        hash,
        json,
    })
}

/// Loads a task pool: a JSON array of instances with unique ids and
/// non-empty payloads.
pub fn load_instances(path: &Path) -> Result<Vec<TaskInstance>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let instances: Vec<TaskInstance> =
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    if instances.is_empty() {
        return Err(invalid(format!("{}: instance pool is empty", path.display())));
    }
    let mut seen = BTreeSet::new();
    for x in &instances {
        if x.id.is_empty() {
            return Err(invalid(format!("{}: instance with empty id", path.display())));
        }
        if x.payload.is_empty() {
            return Err(invalid(format!(
                "{}: instance {} has an empty payload",
                path.display(),
                x.id
            )));
        }
        if !seen.insert(&x.id) {
            return Err(invalid(format!(
                "{}: duplicate instance id {}",
                path.display(),
                x.id
            )));
        }
    }
    Ok(instances)
}

/// CLI-level overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl LoadedConfig {
    /// Resolves a config-relative path against the config file's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// The configuration after overrides, as recorded into the run
    /// directory: the file's JSON with the effective seed and worker count
    /// substituted in, so a run directory always documents the values that
    /// actually ran.
    pub fn effective_json(&self, overrides: Overrides) -> serde_json::Value {
        let mut json = self.json.clone();
        if let Some(seed) = overrides.seed {
            json["split"]["seed"] = serde_json::json!(seed);
        }
        if let Some(workers) = overrides.workers {
            json["workers"]["pipeline"] = serde_json::json!(workers);
        }
        json
    }

    /// The held-out pool for paired evaluation.
    pub fn load_test_instances(&self) -> Result<Vec<TaskInstance>, ConfigError> {
        let path = self.config.paths.test_instances.as_ref().ok_or_else(|| {
            invalid("paths.test_instances is required for held-out evaluation")
        })?;
        load_instances(&self.resolve(path))
    }

    /// Registers the base agent and auxiliary into a hub persisted under
    /// `run_dir` (created if absent). HTTP credentials are read from the
    /// environment here and held only in memory.
    pub fn build_hub(&self, run_dir: &Path) -> Result<ProviderHub, ConfigError> {
        fs::create_dir_all(run_dir).map_err(|source| ConfigError::Io {
            path: run_dir.to_path_buf(),
            source,
        })?;
        let mut hub = ProviderHub::open(run_dir).map_err(|e| invalid(e.to_string()))?;
        hub.register(
            "base",
            AgentRole::BaseAgent,
            self.config.agent.request_defaults(),
            self.config.agent.build_provider()?,
        );
        hub.register(
            "aux",
            AgentRole::GenerationAux,
            self.config.auxiliary.request_defaults(),
            self.config.auxiliary.build_provider()?,
        );
        Ok(hub)
    }

    /// Assembles the full pipeline context for `run_dir`: providers built,
    /// pool loaded, every parameter mapped, the effective config recorded.
    pub fn build_context(
        &self,
        run_dir: &Path,
        overrides: Overrides,
    ) -> Result<PipelineContext, ConfigError> {
        let config = &self.config;
        let seed = overrides.seed.unwrap_or(config.split.seed);
        let pipeline_workers = overrides.workers.unwrap_or(config.workers.pipeline);
        if pipeline_workers == 0 {
            return Err(invalid("workers override must be positive"));
        }
        let effective = self.effective_json(overrides);
        let hash = canonical_hash(&effective);
        let hub = self.build_hub(run_dir)?;
        let pool = load_instances(&self.resolve(&config.paths.instances))?;
        let mut metadata = config.metadata.clone();
        metadata
            .entry("benchmark".to_string())
            .or_insert_with(|| config.benchmark.clone());

        Ok(PipelineContext {
            run_dir: run_dir.to_path_buf(),
            hub,
            base_agent: "base".to_string(),
            aux_agent: "aux".to_string(),
            evaluator: Evaluator::new(config.evaluator.clone()),
            embedder: Box::new(HashEmbedder::new(config.embedding.dim, seed)),
            induction: InductionConfig {
                target_cluster_size: config.induction.target_cluster_size,
                kmin: config.induction.kmin,
                kmax: config.induction.kmax,
                max_clusters: config.induction.max_clusters,
                contrast_cap: config.induction.contrast_cap,
                abs_sample_cap: config.induction.abs_sample_cap,
                summ_triple_cap: config.induction.summ_triple_cap,
                workers: pipeline_workers,
                seed,
            },
            gate: GateConfig {
                g_abs: config.refinement.gate_abs,
                g_rel: config.refinement.gate_rel,
            },
            rounds: config.refinement.rounds,
            guard_cap: config.refinement.guard_cap,
            feedback_sample_cap: config.refinement.feedback_sample_cap,
            feedback_workers: config.workers.feedback,
            rollout_workers: pipeline_workers,
            exposure_failure_clusters: config.exposure.failure_clusters,
            exposure_success_clusters: config.exposure.success_clusters,
            exposure_contrasts: config.exposure.contrasts,
            generation_max_tokens: config.generation.max_tokens,
            body_char_cap: config.generation.body_char_cap,
            skill_name: config.skill_name.clone(),
            metadata,
            rollout_opts: RolloutOptions::new(config.rollout.system_prompt.clone())
                .with_step_cap(config.rollout.step_cap),
            pool,
            split_ratio: config.split.ratio,
            min_verification: config.split.min_verification,
            config_hash: hash,
            config_json: effective,
        })
    }
}
