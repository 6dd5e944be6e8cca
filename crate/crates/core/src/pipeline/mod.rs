//! End-to-end synthesis pipeline: elicit and cache baselines, compress the
//! induction subset into a diagnostic summary, run the K-round
//! generation–verification–refinement loop, select the best round by verified
//! net gain, and stamp the survivor through the deployment gate. Every stage
//! persists into one run directory and replays from caches, so re-running an
//! unchanged run issues zero provider calls.

mod feedback;
mod generate;
mod verify;

pub use feedback::build_feedback;
pub use generate::{
    build_generation_prompt, build_refinement_prompt, generate, parse_generation_reply, refine,
    select_exposure, Exposure,
};
pub use verify::{
    cache_verification_baseline, load_verification_baseline, verify_candidate,
    CandidateVerification, VER_BASELINE_STAGE, VER_PAIR_CONTEXT,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{serialize_skill, ArtifactError, BundleError, SkillArtifact, SkillStatus};
use crate::gateway::{
    read_call_records, GatewayError, ProviderError, ProviderHub, RolloutOptions,
};
use crate::induction::{
    compress, elicit_baseline, BaselineSet, CompressOutput, DiagnosticSummary, Embedder,
    InductionConfig, InductionContext, InductionError,
};
use crate::model::{
    split_dataset, DatasetSplit, Evaluator, SplitError, StoreError, TaskInstance, TrajectoryStore,
};
use crate::stats::{gate_decision, select_best, GateConfig, GateOutcome, PairedStats, StatsError};

pub const CONFIG_FILE: &str = "config.json";
pub const SPLIT_FILE: &str = "split.json";
pub const BASELINE_FILE: &str = "baseline.jsonl";
pub const VER_BASELINE_FILE: &str = "ver_baseline.jsonl";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const CONTRAST_AUDIT_FILE: &str = "contrast_audit.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOCK_FILE: &str = "run.lock";
pub const ROUNDS_DIR: &str = "rounds";
pub const SELECTED_DIR: &str = "selected";
pub const SELECTION_FILE: &str = "selection.json";
pub const ROUND_STATS_FILE: &str = "stats.json";
pub const ROUND_FEEDBACK_FILE: &str = "feedback.json";

/// Ledger stage label for induction-subset baseline rollouts.
pub const ELICIT_STAGE: &str = "elicit";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing upstream artifact: {what}")]
    MissingUpstream { what: String },
    #[error("verification baseline not cached: {detail}")]
    VerificationBaselineMissing { detail: String },
    #[error("round {round} generation reply malformed after one reprompt: {reason}")]
    MalformedGeneration { round: u32, reason: String },
    #[error("information isolation violated: {stage} prompt (round {round:?}) contains verification instance id {id}")]
    IsolationViolation {
        stage: String,
        round: Option<u32>,
        id: String,
    },
    #[error("run directory is locked by {path} (remove it if no other process owns this run)")]
    RunLocked { path: PathBuf },
    #[error("pipeline io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Induction(#[from] InductionError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl PipelineError {
    /// True when the root cause is a provider transport/protocol failure
    /// (after retries), as opposed to a configuration or artifact problem.
    pub fn is_provider_failure(&self) -> bool {
        fn provider(err: &GatewayError) -> bool {
            matches!(err, GatewayError::Provider(ProviderError::Transport { .. }))
                || matches!(err, GatewayError::Provider(ProviderError::Protocol { .. }))
                || matches!(
                    err,
                    GatewayError::Provider(ProviderError::MissingCredential { .. })
                )
        }
        match self {
            PipelineError::Gateway(err) => provider(err),
            PipelineError::Induction(InductionError::Gateway(err)) => provider(err),
            _ => false,
        }
    }
}

/// The four-field refinement feedback for one round, plus the instance ids
/// whose explanations it was aggregated from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackBundle {
    pub keep: String,
    pub remove: String,
    pub add: String,
    pub emphasize: String,
    pub evidence: Vec<String>,
}

/// One verification instance's paired outcomes under the cached no-skill
/// baseline and the candidate skill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub id: String,
    pub baseline: bool,
    pub skill: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Guard view of one round: the capped subset of baseline successes that was
/// watched for regressions, and which of them regressed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardSummary {
    pub checked: Vec<String>,
    pub regressions: Vec<String>,
}

/// Everything one loop round produced.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: u32,
    pub skill: SkillArtifact,
    pub stats: PairedStats,
    pub outcomes: Vec<PairedOutcome>,
    pub guard: GuardSummary,
    pub feedback: FeedbackBundle,
}

/// The persisted per-round verification record (rounds/r<k>/stats.json).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStatsRecord {
    pub round: u32,
    pub stats: PairedStats,
    pub guard: GuardSummary,
    pub outcomes: Vec<PairedOutcome>,
}

/// The persisted selection verdict (selected/selection.json).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub selected_round: u32,
    pub final_status: String,
    pub stats: PairedStats,
}

/// A completed pipeline execution.
#[derive(Debug)]
pub struct PipelineRun {
    pub config_hash: String,
    pub split: DatasetSplit,
    pub baseline: BaselineSet,
    pub ver_baseline: BaselineSet,
    pub diagnostic: DiagnosticSummary,
    pub rounds: Vec<RoundRecord>,
    pub selected: u32,
    pub final_status: GateOutcome,
    pub selected_skill: SkillArtifact,
}

/// Everything the pipeline stages need, assembled once from a validated
/// configuration (or directly by tests).
pub struct PipelineContext {
    pub run_dir: PathBuf,
    pub hub: ProviderHub,
    pub base_agent: String,
    pub aux_agent: String,
    pub evaluator: Evaluator,
    pub embedder: Box<dyn Embedder>,
    pub induction: InductionConfig,
    pub gate: GateConfig,
    /// Maximum refinement budget K (≥ 1).
    pub rounds: u32,
    pub guard_cap: usize,
    pub feedback_sample_cap: usize,
    pub feedback_workers: usize,
    pub rollout_workers: usize,
    pub exposure_failure_clusters: usize,
    pub exposure_success_clusters: usize,
    pub exposure_contrasts: usize,
    pub generation_max_tokens: u64,
    pub body_char_cap: usize,
    pub skill_name: String,
    pub metadata: BTreeMap<String, String>,
    pub rollout_opts: RolloutOptions,
    pub pool: Vec<TaskInstance>,
    pub split_ratio: f64,
    pub min_verification: usize,
    pub config_hash: String,
    pub config_json: serde_json::Value,
}

impl PipelineContext {
    /// Run root seed; every stage derives its own stream from it.
    pub fn seed(&self) -> u64 {
        self.induction.seed
    }

    fn induction_context(&self) -> InductionContext<'_> {
        InductionContext {
            hub: &self.hub,
            aux_agent: &self.aux_agent,
            embedder: self.embedder.as_ref(),
            config: &self.induction,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Exclusive ownership of a run directory for the lifetime of one command.
/// The lock file is removed on drop; a file left behind by a killed process
/// must be removed manually.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
        let path = run_dir.join(LOCK_FILE);
        let mut file = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|source| {
                if source.kind() == std::io::ErrorKind::AlreadyExists {
                    PipelineError::RunLocked { path: path.clone() }
                } else {
                    PipelineError::Io {
                        path: path.clone(),
                        source,
                    }
                }
            })?;
        let _ = writeln!(file, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        if let Err(err) = fs::remove_file(&self.path) {
            log::warn!("failed to remove lock file {}: {err}", self.path.display());
        }
    }
}

/// Stage completion markers, appended as each stage finishes; a failed run
/// can resume from the last marker with all earlier provider calls replayed
/// from the cache.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub completed: Vec<String>,
}

pub fn read_checkpoint(run_dir: &Path) -> Result<Checkpoint, PipelineError> {
    let path = run_dir.join(CHECKPOINT_FILE);
    if !path.exists() {
        return Ok(Checkpoint::default());
    }
    read_json(&path)
}

fn mark_checkpoint(run_dir: &Path, stage: &str) -> Result<(), PipelineError> {
    let mut checkpoint = read_checkpoint(run_dir)?;
    if !checkpoint.completed.iter().any(|s| s == stage) {
        checkpoint.completed.push(stage.to_string());
    }
    write_json(&run_dir.join(CHECKPOINT_FILE), &checkpoint)
}

/// Deterministically splits the configured pool and persists the result.
pub fn stage_split(ctx: &PipelineContext) -> Result<DatasetSplit, PipelineError> {
    fs::create_dir_all(&ctx.run_dir).map_err(io_err(&ctx.run_dir))?;
    let split = split_dataset(&ctx.pool, ctx.split_ratio, ctx.min_verification, ctx.seed())?;
    write_json(&ctx.run_dir.join(SPLIT_FILE), &split)?;
    Ok(split)
}

/// Reads the persisted split of an existing run.
pub fn load_split(ctx: &PipelineContext) -> Result<DatasetSplit, PipelineError> {
    let path = ctx.run_dir.join(SPLIT_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingUpstream {
            what: format!("{SPLIT_FILE} (run the elicitation stage first)"),
        });
    }
    read_json(&path)
}

/// Output of the elicitation stage: the split plus both cached baselines.
#[derive(Debug)]
pub struct ElicitOutput {
    pub split: DatasetSplit,
    pub baseline: BaselineSet,
    pub ver_baseline: BaselineSet,
}

/// Stage 1: split the pool, roll out the no-skill baseline on the induction
/// subset, and cache the no-skill verification baseline. Both stores replay
/// on re-run.
pub fn stage_elicit(ctx: &PipelineContext) -> Result<ElicitOutput, PipelineError> {
    let split = stage_split(ctx)?;
    write_json(&ctx.run_dir.join(CONFIG_FILE), &ctx.config_json)?;

    let mut store = TrajectoryStore::open(ctx.run_dir.join(BASELINE_FILE))?;
    let baseline = elicit_baseline(
        &ctx.hub,
        &ctx.base_agent,
        &split.induction,
        &ctx.evaluator,
        &mut store,
        &ctx.rollout_opts,
        ctx.rollout_workers,
        ctx.seed(),
        ELICIT_STAGE,
        ELICIT_STAGE,
    )?;

    let ver_baseline = cache_verification_baseline(ctx, &split.verification)?;
    mark_checkpoint(&ctx.run_dir, "baseline")?;
    Ok(ElicitOutput {
        split,
        baseline,
        ver_baseline,
    })
}

/// Loads the induction-subset baseline cached by the elicitation stage.
/// Reads the persisted induction-subset baseline of an existing run.
pub fn load_induction_baseline(
    ctx: &PipelineContext,
    split: &DatasetSplit,
) -> Result<BaselineSet, PipelineError> {
    let path = ctx.run_dir.join(BASELINE_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingUpstream {
            what: format!("{BASELINE_FILE} (run the elicitation stage first)"),
        });
    }
    let store = TrajectoryStore::open(&path)?;
    let mut records = Vec::with_capacity(split.induction.len());
    for x in &split.induction {
        let record = store.get(&x.id).ok_or_else(|| PipelineError::MissingUpstream {
            what: format!("baseline record for instance {} in {BASELINE_FILE}", x.id),
        })?;
        records.push(record.clone());
    }
    Ok(BaselineSet::from_records(records))
}

/// Stage 2: compress the induction baseline into the diagnostic summary and
/// persist it together with the embedding table and the contrast audit. The
/// diagnostic file holds the exact canonical bytes whose hash stamps every
/// skill's provenance.
pub fn stage_induce(ctx: &PipelineContext) -> Result<CompressOutput, PipelineError> {
    let split = load_split(ctx)?;
    let baseline = load_induction_baseline(ctx, &split)?;
    let output = compress(&ctx.induction_context(), &split.induction, &baseline)?;

    let diag_path = ctx.run_dir.join(DIAGNOSTIC_FILE);
    fs::write(&diag_path, output.summary.canonical_json()).map_err(io_err(&diag_path))?;
    crate::induction::write_embeddings_csv(
        &ctx.run_dir.join(EMBEDDINGS_FILE),
        &output.rollout_summaries,
    )?;
    write_json(&ctx.run_dir.join(CONTRAST_AUDIT_FILE), &output.contrast_audit)?;
    mark_checkpoint(&ctx.run_dir, "induction")?;
    Ok(output)
}

/// Loads the persisted diagnostic summary.
pub fn load_diagnostic(run_dir: &Path) -> Result<DiagnosticSummary, PipelineError> {
    let path = run_dir.join(DIAGNOSTIC_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingUpstream {
            what: format!("{DIAGNOSTIC_FILE} (run the induction stage first)"),
        });
    }
    read_json(&path)
}

pub fn round_dir(run_dir: &Path, round: u32) -> PathBuf {
    run_dir.join(ROUNDS_DIR).join(format!("r{round}"))
}

/// Output of the loop stage.
#[derive(Debug)]
pub struct RoundsOutput {
    pub rounds: Vec<RoundRecord>,
    pub selected: u32,
    pub final_status: GateOutcome,
    pub selected_skill: SkillArtifact,
}

/// Stage 3: the K-round loop. Each round generates (or refines) one
/// candidate, verifies it on every verification instance with the cached
/// pairing seeds, and assembles feedback for the next round; the round with
/// the highest verified net gain (earliest on ties) is selected and stamped
/// through the gate. Each round directory is persisted before the next
/// begins, so an aborted run resumes from its checkpoint with all completed
/// calls replayed from the cache.
pub fn run_rounds(
    ctx: &PipelineContext,
    diagnostic: &DiagnosticSummary,
    split: &DatasetSplit,
    ver_baseline: &BaselineSet,
) -> Result<RoundsOutput, PipelineError> {
    assert!(ctx.rounds >= 1, "refinement budget must be at least one round");
    let instances_by_id: BTreeMap<String, &TaskInstance> = split
        .verification
        .iter()
        .map(|x| (x.id.clone(), x))
        .collect();

    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut best: Option<(u32, i64)> = None;
    for round in 1..=ctx.rounds {
        let skill = match rounds.last() {
            None => generate(ctx, diagnostic)?,
            Some(prev) => refine(ctx, &prev.skill, diagnostic, &prev.feedback, round)?,
        };

        let dir = round_dir(&ctx.run_dir, round);
        serialize_skill(&skill, &dir)?;

        let verification = verify_candidate(ctx, &skill, round, &split.verification, ver_baseline)?;
        write_json(
            &dir.join(ROUND_STATS_FILE),
            &RoundStatsRecord {
                round,
                stats: verification.stats.clone(),
                guard: verification.guard.clone(),
                outcomes: verification.outcomes.clone(),
            },
        )?;

        let feedback = build_feedback(ctx, round, &verification, &instances_by_id, ver_baseline)?;
        write_json(&dir.join(ROUND_FEEDBACK_FILE), &feedback)?;

        best = match best {
            Some((_, g)) if verification.stats.net_gain <= g => best,
            _ => Some((round, verification.stats.net_gain)),
        };

        rounds.push(RoundRecord {
            round,
            skill,
            stats: verification.stats,
            outcomes: verification.outcomes,
            guard: verification.guard,
            feedback,
        });
        mark_checkpoint(&ctx.run_dir, &format!("round-{round}"))?;
    }

    let gains: Vec<(u32, i64)> = rounds.iter().map(|r| (r.round, r.stats.net_gain)).collect();
    let selected = select_best(&gains).expect("at least one round ran");
    debug_assert_eq!(Some(selected), best.map(|(r, _)| r));
    let selected_record = &rounds[(selected - 1) as usize];

    let final_status = gate_decision(&selected_record.stats, &ctx.gate);
    let status = match final_status {
        GateOutcome::Active => SkillStatus::Active,
        GateOutcome::Deprecated => SkillStatus::Deprecated,
    };
    let selected_skill = selected_record.skill.clone().with_status(status)?;
    serialize_skill(&selected_skill, &ctx.run_dir.join(SELECTED_DIR))?;
    write_json(
        &ctx.run_dir.join(SELECTED_DIR).join(SELECTION_FILE),
        &SelectionRecord {
            selected_round: selected,
            final_status: status.as_str().to_string(),
            stats: selected_record.stats.clone(),
        },
    )?;

    let ver_ids: Vec<String> = split.verification.iter().map(|x| x.id.clone()).collect();
    audit_information_isolation(&ctx.run_dir, &ver_ids)?;
    mark_checkpoint(&ctx.run_dir, "selected")?;

    Ok(RoundsOutput {
        rounds,
        selected,
        final_status,
        selected_skill,
    })
}

/// Runs the complete pipeline under the run-directory lock.
pub fn run_pipeline(ctx: &PipelineContext) -> Result<PipelineRun, PipelineError> {
    let _lock = RunLock::acquire(&ctx.run_dir)?;
    let elicited = stage_elicit(ctx)?;
    let compressed = stage_induce(ctx)?;
    let looped = run_rounds(ctx, &compressed.summary, &elicited.split, &elicited.ver_baseline)?;
    Ok(PipelineRun {
        config_hash: ctx.config_hash.clone(),
        split: elicited.split,
        baseline: elicited.baseline,
        ver_baseline: elicited.ver_baseline,
        diagnostic: compressed.summary,
        rounds: looped.rounds,
        selected: looped.selected,
        final_status: looped.final_status,
        selected_skill: looped.selected_skill,
    })
}

/// String-level audit of the call ledger: no prompt sent during induction or
/// first-round generation may mention a verification instance id. Ids that
/// are substrings of unrelated prompt text can false-positive; pools should
/// use equal-length or prefixed ids.
pub fn audit_information_isolation(
    run_dir: &Path,
    verification_ids: &[String],
) -> Result<(), PipelineError> {
    let records = read_call_records(&run_dir.join("calls.jsonl"))?;
    for record in &records {
        let audited = record.stage == crate::induction::INDUCE_STAGE
            || (record.stage == "generate" && record.round == Some(1));
        if !audited {
            continue;
        }
        for message in &record.request.messages {
            for id in verification_ids {
                if message.content.contains(id.as_str()) {
                    return Err(PipelineError::IsolationViolation {
                        stage: record.stage.clone(),
                        round: record.round,
                        id: id.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}
