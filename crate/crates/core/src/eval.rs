//! Held-out evaluation and reporting: paired baseline-vs-skill rollouts that
//! share instance id and seed, no-op handling for deprecated skills, transfer
//! matrices across executing agents, and the CSV report surface.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{SkillArtifact, SkillStatus};
use crate::gateway::{rollout, GatewayError, ProviderHub, RolloutOptions};
use crate::induction::scoped_pool;
use crate::model::{derive_seed, Evaluator, TaskInstance};
use crate::pipeline::{PairedOutcome, PipelineError, RoundStatsRecord, ROUNDS_DIR, ROUND_STATS_FILE};
use crate::stats::{transition_counts, StatsError};

/// Seed/evaluator pairing context for held-out evaluation: both arms of every
/// test instance draw the same rollout seed and evaluator noise from it.
pub const TEST_PAIR_CONTEXT: &str = "test-pair";
/// Ledger stage labels for the two arms.
pub const TEST_BASELINE_STAGE: &str = "test-baseline";
pub const TEST_SKILL_STAGE: &str = "test-skill";

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("test pool overlaps the skill-training pool on ids: {}", ids.join(", "))]
    TrainTestOverlap { ids: Vec<String> },
    #[error("evaluation requires a non-empty test pool")]
    EmptyTestPool,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("report export failed: {0}")]
    Export(#[from] csv::Error),
    #[error("report io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// How the skill side of the pairing was executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatusApplied {
    /// The skill was injected on the skill arm.
    #[serde(rename = "active")]
    Active,
    /// The skill is deprecated: the skill arm reused the baseline outcome and
    /// nothing was ever injected.
    #[serde(rename = "deprecated-noop")]
    DeprecatedNoop,
}

impl StatusApplied {
    pub fn as_str(self) -> &'static str {
        match self {
            StatusApplied::Active => "active",
            StatusApplied::DeprecatedNoop => "deprecated-noop",
        }
    }
}

/// Paired held-out evaluation of one skill on one executing agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub base_acc: f64,
    pub skill_acc: f64,
    /// 100 · (skill_acc − base_acc).
    pub delta_pp: f64,
    pub repairs: u64,
    pub regressions: u64,
    pub status_applied: StatusApplied,
    pub per_instance: Vec<PairedOutcome>,
}

/// One cell of a transfer matrix: a skill generated by `source_model`
/// executed by `evaluator_model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source_model: String,
    pub evaluator_model: String,
    pub delta_pp: f64,
}

/// Everything a paired evaluation needs besides the skill and the pool.
pub struct EvalContext<'a> {
    pub hub: &'a ProviderHub,
    pub agent_id: &'a str,
    pub evaluator: &'a Evaluator,
    pub opts: &'a RolloutOptions,
    pub workers: usize,
    pub seed: u64,
}

fn check_overlap(
    test: &[TaskInstance],
    training_ids: &BTreeSet<String>,
) -> Result<(), EvaluationError> {
    let mut overlap: Vec<String> = test
        .iter()
        .filter(|x| training_ids.contains(&x.id))
        .map(|x| x.id.clone())
        .collect();
    if !overlap.is_empty() {
        overlap.sort();
        return Err(EvaluationError::TrainTestOverlap { ids: overlap });
    }
    Ok(())
}

fn sorted<'a>(test: &'a [TaskInstance]) -> Vec<&'a TaskInstance> {
    let mut ordered: Vec<&TaskInstance> = test.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    ordered
}

/// One arm of a pairing: rollout plus scoring, with rollout or evaluation
/// errors recorded as a failed outcome instead of aborting the batch.
fn run_arm(
    ctx: &EvalContext,
    x: &TaskInstance,
    skill: Option<&SkillArtifact>,
    seed: u64,
    stage: &str,
    context: &str,
) -> (bool, Option<String>) {
    let tau = match rollout(ctx.hub, ctx.agent_id, x, skill, seed, stage, None, ctx.opts) {
        Ok(tau) => tau,
        Err(err) => {
            let detail = format!("rollout error: {err}");
            log::warn!("{stage} arm for {}: {detail}; scoring as failure", x.id);
            return (false, Some(detail));
        }
    };
    debug_assert_eq!(tau.instance_id, x.id);
    match ctx.evaluator.evaluate(x, &tau, context) {
        Ok(outcome) => (outcome.outcome, outcome.diagnostic),
        Err(err) => {
            let detail = format!("evaluation error: {err}");
            log::warn!("{stage} arm for {}: {detail}; scoring as failure", x.id);
            (false, Some(detail))
        }
    }
}

/// The no-skill arm over a test pool, computed once and reusable across every
/// skill evaluated on the same agent.
fn baseline_arm(
    ctx: &EvalContext,
    test: &[TaskInstance],
    context: &str,
) -> BTreeMap<String, (bool, Option<String>)> {
    let ordered = sorted(test);
    scoped_pool(ctx.workers).install(|| {
        ordered
            .par_iter()
            .map(|x| {
                let seed = derive_seed(ctx.seed, context, &x.id);
                let (b, diagnostic) = run_arm(ctx, x, None, seed, TEST_BASELINE_STAGE, context);
                (x.id.clone(), (b, diagnostic))
            })
            .collect()
    })
}

fn paired_eval_against_baseline(
    ctx: &EvalContext,
    skill: &SkillArtifact,
    test: &[TaskInstance],
    context: &str,
    baseline: &BTreeMap<String, (bool, Option<String>)>,
) -> Result<EvalReport, EvaluationError> {
    if test.is_empty() {
        return Err(EvaluationError::EmptyTestPool);
    }
    let ordered = sorted(test);
    let deprecated = skill.status == SkillStatus::Deprecated;

    let skill_arm: Vec<(bool, Option<String>)> = if deprecated {
        // Appendix-style no-op: evaluation reuses the no-skill outcome and the
        // skill never touches a prompt.
        ordered.iter().map(|x| baseline[&x.id].clone()).collect()
    } else {
        scoped_pool(ctx.workers).install(|| {
            ordered
                .par_iter()
                .map(|x| {
                    let seed = derive_seed(ctx.seed, context, &x.id);
                    run_arm(ctx, x, Some(skill), seed, TEST_SKILL_STAGE, context)
                })
                .collect()
        })
    };

    let mut per_instance = Vec::with_capacity(ordered.len());
    for (x, (z, z_diag)) in ordered.iter().zip(skill_arm) {
        let (b, b_diag) = baseline[&x.id].clone();
        per_instance.push(PairedOutcome {
            id: x.id.clone(),
            baseline: b,
            skill: z,
            diagnostic: z_diag.or(b_diag),
        });
    }

    let baseline_bits: Vec<bool> = per_instance.iter().map(|o| o.baseline).collect();
    let skill_bits: Vec<bool> = per_instance.iter().map(|o| o.skill).collect();
    let stats = transition_counts(&baseline_bits, &skill_bits)?;
    let m = stats.m as f64;
    let base_acc = baseline_bits.iter().filter(|&&b| b).count() as f64 / m;
    let skill_acc = skill_bits.iter().filter(|&&z| z).count() as f64 / m;

    Ok(EvalReport {
        base_acc,
        skill_acc,
        delta_pp: 100.0 * (skill_acc - base_acc),
        repairs: stats.repairs(),
        regressions: stats.regressions(),
        status_applied: if deprecated {
            StatusApplied::DeprecatedNoop
        } else {
            StatusApplied::Active
        },
        per_instance,
    })
}

/// Paired held-out evaluation: two rollouts per instance sharing id and seed
/// (empty intervention vs. the skill), scored with shared evaluator noise. A
/// deprecated skill is a no-op: its arm reuses the baseline outcomes.
/// `training_ids` is the full pool the skill was synthesized from; any
/// overlap with the test pool is an error.
pub fn paired_eval(
    ctx: &EvalContext,
    skill: &SkillArtifact,
    test: &[TaskInstance],
    training_ids: &BTreeSet<String>,
) -> Result<EvalReport, EvaluationError> {
    check_overlap(test, training_ids)?;
    if test.is_empty() {
        return Err(EvaluationError::EmptyTestPool);
    }
    let baseline = baseline_arm(ctx, test, TEST_PAIR_CONTEXT);
    paired_eval_against_baseline(ctx, skill, test, TEST_PAIR_CONTEXT, &baseline)
}

/// Shared collaborators for a transfer study.
pub struct TransferSetup<'a> {
    pub hub: &'a ProviderHub,
    pub evaluator: &'a Evaluator,
    pub opts: &'a RolloutOptions,
    pub workers: usize,
    pub seed: u64,
}

/// Cross-model transfer: every source's skill is executed by every evaluator
/// agent on one shared held-out pool, against that evaluator's own no-skill
/// baseline (computed once per evaluator). Each evaluator draws its own seed
/// stream, so cells in a column are internally paired while columns stay
/// independent. Deprecated source skills produce all-zero rows.
pub fn transfer_matrix(
    setup: &TransferSetup,
    skills_by_source: &[(String, SkillArtifact)],
    evaluator_agents: &[String],
    test: &[TaskInstance],
    training_ids: &BTreeSet<String>,
) -> Result<Vec<TransferCell>, EvaluationError> {
    check_overlap(test, training_ids)?;
    if test.is_empty() {
        return Err(EvaluationError::EmptyTestPool);
    }
    let mut by_pair: BTreeMap<(usize, usize), TransferCell> = BTreeMap::new();
    for (col, agent_id) in evaluator_agents.iter().enumerate() {
        let ctx = EvalContext {
            hub: setup.hub,
            agent_id,
            evaluator: setup.evaluator,
            opts: setup.opts,
            workers: setup.workers,
            seed: setup.seed,
        };
        let context = format!("{TEST_PAIR_CONTEXT}/{agent_id}");
        let baseline = baseline_arm(&ctx, test, &context);
        for (row, (source, skill)) in skills_by_source.iter().enumerate() {
            let report = paired_eval_against_baseline(&ctx, skill, test, &context, &baseline)?;
            by_pair.insert(
                (row, col),
                TransferCell {
                    source_model: source.clone(),
                    evaluator_model: agent_id.clone(),
                    delta_pp: report.delta_pp,
                },
            );
        }
    }
    Ok(by_pair.into_values().collect())
}

/// One completed run's identity and outcome, as a row of results.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub benchmark: String,
    pub split: String,
    pub model: String,
    pub base_acc: f64,
    pub skill_acc: f64,
    pub delta_pp: f64,
    pub repairs: u64,
    pub regressions: u64,
    pub net_gain: i64,
    pub status: String,
}

impl ResultRow {
    pub fn from_report(
        benchmark: impl Into<String>,
        split: impl Into<String>,
        model: impl Into<String>,
        report: &EvalReport,
    ) -> Self {
        Self {
            benchmark: benchmark.into(),
            split: split.into(),
            model: model.into(),
            base_acc: report.base_acc,
            skill_acc: report.skill_acc,
            delta_pp: report.delta_pp,
            repairs: report.repairs,
            regressions: report.regressions,
            net_gain: report.repairs as i64 - report.regressions as i64,
            status: report.status_applied.as_str().to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvaluationError + '_ {
    move |source| EvaluationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<(), EvaluationError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "benchmark",
        "split",
        "model",
        "base_acc",
        "skill_acc",
        "delta_pp",
        "repairs",
        "regressions",
        "net_gain",
        "status",
    ])?;
    for row in rows {
        writer.write_record([
            row.benchmark.clone(),
            row.split.clone(),
            row.model.clone(),
            format!("{:.4}", row.base_acc),
            format!("{:.4}", row.skill_acc),
            format!("{:.2}", row.delta_pp),
            row.repairs.to_string(),
            row.regressions.to_string(),
            row.net_gain.to_string(),
            row.status.clone(),
        ])?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Loads the per-round verification records of a completed run, ascending by
/// round.
pub fn load_round_curve(run_dir: &Path) -> Result<Vec<RoundStatsRecord>, EvaluationError> {
    let rounds_dir = run_dir.join(ROUNDS_DIR);
    let mut records: Vec<RoundStatsRecord> = Vec::new();
    if !rounds_dir.exists() {
        return Ok(records);
    }
    for entry in fs::read_dir(&rounds_dir).map_err(io_err(&rounds_dir))? {
        let entry = entry.map_err(io_err(&rounds_dir))?;
        let stats_path = entry.path().join(ROUND_STATS_FILE);
        if !stats_path.exists() {
            continue;
        }
        let text = fs::read_to_string(&stats_path).map_err(io_err(&stats_path))?;
        let record: RoundStatsRecord =
            serde_json::from_str(&text).map_err(PipelineError::Json)?;
        records.push(record);
    }
    records.sort_by_key(|r| r.round);
    Ok(records)
}

/// The round curve behind the refinement figure: verified net gain and
/// effect per round, plus the running best (prefix maximum of net gain).
pub fn write_rounds_csv(
    path: &Path,
    benchmark: &str,
    curve: &[RoundStatsRecord],
) -> Result<(), EvaluationError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["benchmark", "round", "net_gain", "delta_hat", "best_so_far"])?;
    let mut best = i64::MIN;
    for record in curve {
        best = best.max(record.stats.net_gain);
        writer.write_record([
            benchmark.to_string(),
            record.round.to_string(),
            record.stats.net_gain.to_string(),
            format!("{:.4}", record.stats.delta_hat),
            best.to_string(),
        ])?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_transfer_csv(path: &Path, cells: &[TransferCell]) -> Result<(), EvaluationError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["source_model", "evaluator_model", "delta_pp"])?;
    for cell in cells {
        writer.write_record([
            cell.source_model.clone(),
            cell.evaluator_model.clone(),
            format!("{:.2}", cell.delta_pp),
        ])?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Per-stage token accounting over one run's call ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStageSummary {
    pub stage: String,
    pub calls: u64,
    pub total_tokens: u64,
    pub mean_tokens: f64,
    pub median_tokens: f64,
}

fn median(sorted_values: &[u64]) -> f64 {
    let n = sorted_values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted_values[n / 2] as f64
    } else {
        (sorted_values[n / 2 - 1] + sorted_values[n / 2]) as f64 / 2.0
    }
}

/// Summarizes ledger.csv by stage: per-call tokens are prompt plus output.
pub fn summarize_tokens(run_dir: &Path) -> Result<Vec<TokenStageSummary>, EvaluationError> {
    let path = run_dir.join("ledger.csv");
    let mut per_stage: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    if path.exists() {
        let mut reader = csv::Reader::from_path(&path)?;
        let headers = reader.headers()?.clone();
        let stage_idx = headers.iter().position(|h| h == "stage");
        let prompt_idx = headers.iter().position(|h| h == "prompt_tokens");
        let output_idx = headers.iter().position(|h| h == "output_tokens");
        let (Some(stage_idx), Some(prompt_idx), Some(output_idx)) =
            (stage_idx, prompt_idx, output_idx)
        else {
            return Ok(Vec::new());
        };
        for row in reader.records() {
            let row = row?;
            let stage = row.get(stage_idx).unwrap_or("").to_string();
            let prompt: u64 = row.get(prompt_idx).and_then(|v| v.parse().ok()).unwrap_or(0);
            let output: u64 = row.get(output_idx).and_then(|v| v.parse().ok()).unwrap_or(0);
            per_stage.entry(stage).or_default().push(prompt + output);
        }
    }
    Ok(per_stage
        .into_iter()
        .map(|(stage, mut tokens)| {
            tokens.sort_unstable();
            let total: u64 = tokens.iter().sum();
            let calls = tokens.len() as u64;
            TokenStageSummary {
                stage,
                calls,
                total_tokens: total,
                mean_tokens: total as f64 / calls as f64,
                median_tokens: median(&tokens),
            }
        })
        .collect())
}

pub fn write_tokens_csv(
    path: &Path,
    benchmark: &str,
    summaries: &[TokenStageSummary],
) -> Result<(), EvaluationError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "benchmark",
        "stage",
        "calls",
        "total_tokens",
        "mean_tokens",
        "median_tokens",
    ])?;
    for summary in summaries {
        writer.write_record([
            benchmark.to_string(),
            summary.stage.clone(),
            summary.calls.to_string(),
            summary.total_tokens.to_string(),
            format!("{:.2}", summary.mean_tokens),
            format!("{:.1}", summary.median_tokens),
        ])?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// One completed, evaluated run, ready for reporting.
#[derive(Debug, Clone)]
pub struct CompletedRun {
    pub run_dir: PathBuf,
    pub benchmark: String,
    pub split: String,
    pub model: String,
    pub report: EvalReport,
}

/// Emits the full report surface into `out_dir`: results.csv (one row per
/// run), rounds.csv (each run's refinement curve with the running best),
/// tokens.csv (per-stage ledger summaries), and transfer.csv when transfer
/// cells are supplied.
pub fn emit_reports(
    out_dir: &Path,
    runs: &[CompletedRun],
    transfer: &[TransferCell],
) -> Result<(), EvaluationError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let rows: Vec<ResultRow> = runs
        .iter()
        .map(|run| ResultRow::from_report(&run.benchmark, &run.split, &run.model, &run.report))
        .collect();
    write_results_csv(&out_dir.join("results.csv"), &rows)?;

    {
        let path = out_dir.join("rounds.csv");
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(["benchmark", "round", "net_gain", "delta_hat", "best_so_far"])?;
        for run in runs {
            let curve = load_round_curve(&run.run_dir)?;
            let mut best = i64::MIN;
            for record in &curve {
                best = best.max(record.stats.net_gain);
                writer.write_record([
                    run.benchmark.clone(),
                    record.round.to_string(),
                    record.stats.net_gain.to_string(),
                    format!("{:.4}", record.stats.delta_hat),
                    best.to_string(),
                ])?;
            }
        }
        writer.flush().map_err(io_err(&path))?;
    }

    {
        let path = out_dir.join("tokens.csv");
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record([
            "benchmark",
            "stage",
            "calls",
            "total_tokens",
            "mean_tokens",
            "median_tokens",
        ])?;
        for run in runs {
            for summary in summarize_tokens(&run.run_dir)? {
                writer.write_record([
                    run.benchmark.clone(),
                    summary.stage.clone(),
                    summary.calls.to_string(),
                    summary.total_tokens.to_string(),
                    format!("{:.2}", summary.mean_tokens),
                    format!("{:.1}", summary.median_tokens),
                ])?;
            }
        }
        writer.flush().map_err(io_err(&path))?;
    }

    if !transfer.is_empty() {
        write_transfer_csv(&out_dir.join("transfer.csv"), transfer)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{SkillBody, SkillDraft, SkillStatus};
    use crate::gateway::{
        read_call_records, AgentRole, RequestDefaults, ScriptedAgentBehavior, LEDGER_HEADER,
    };
    use crate::model::{EvaluatorKind, EvaluatorSpec};
    use std::sync::Arc;
    use tempfile::TempDir;

    fn defaults() -> RequestDefaults {
        RequestDefaults {
            model: "scripted".into(),
            temperature: 0.0,
            max_tokens: 4096,
        }
    }

    fn test_pool(n: usize) -> Vec<TaskInstance> {
        (1..=n)
            .map(|i| TaskInstance::new(format!("e{i:02}"), format!("compute value e{i:02}")))
            .collect()
    }

    fn exact_match(agent: &ScriptedAgentBehavior, instances: &[TaskInstance]) -> Evaluator {
        let expected = instances
            .iter()
            .map(|x| (x.id.clone(), agent.correct_answer(&x.id)))
            .collect();
        Evaluator::new(EvaluatorSpec {
            kind: EvaluatorKind::ExactMatch {
                expected,
                default_expected: None,
            },
            rng_seed: 7,
        })
    }

    /// A stamped skill whose only effect is carrying the scripted behavior
    /// marker `variant:v1`.
    fn stamped_skill(status: SkillStatus) -> SkillArtifact {
        SkillArtifact::new(
            "eval-playbook",
            SkillDraft {
                body: SkillBody {
                    ctx: "variant:v1 applies here".into(),
                    succ: "state intermediate values".into(),
                    fail: "never skip verification".into(),
                },
                scripts: Vec::new(),
                references: Vec::new(),
            },
            Default::default(),
            1,
            "deadbeef",
        )
        .unwrap()
        .with_status(status)
        .unwrap()
    }

    fn opts() -> RolloutOptions {
        RolloutOptions::new("You are a careful task-solving agent.")
    }

    /// Baseline correct on the even ids; v1 additionally repairs e01, e03,
    /// e05 and regresses e02.
    fn shift_agent(pool: &[TaskInstance]) -> ScriptedAgentBehavior {
        let even: Vec<String> = pool
            .iter()
            .filter(|x| x.id[1..].parse::<usize>().unwrap() % 2 == 0)
            .map(|x| x.id.clone())
            .collect();
        let mut v1: Vec<String> = even.clone();
        v1.retain(|id| id != "e02");
        v1.extend(["e01".to_string(), "e03".to_string(), "e05".to_string()]);
        ScriptedAgentBehavior::new(even).with_variant("v1", v1)
    }

    #[test]
    fn paired_eval_scores_repairs_and_regressions_on_shared_instances() {
        let dir = TempDir::new().unwrap();
        let pool = test_pool(10);
        let agent = shift_agent(&pool);
        let evaluator = exact_match(&agent, &pool);
        let mut hub = ProviderHub::open(dir.path()).unwrap();
        hub.register("base", AgentRole::BaseAgent, defaults(), Arc::new(agent));
        let ctx = EvalContext {
            hub: &hub,
            agent_id: "base",
            evaluator: &evaluator,
            opts: &opts(),
            workers: 2,
            seed: 42,
        };

        let report = paired_eval(&ctx, &stamped_skill(SkillStatus::Active), &pool, &BTreeSet::new())
            .unwrap();

        assert_eq!(report.base_acc, 0.5, "5 even ids out of 10");
        assert_eq!(report.skill_acc, 0.7, "5 baseline + 3 repairs - 1 regression, out of 10");
        assert_eq!(report.repairs, 3);
        assert_eq!(report.regressions, 1);
        assert_eq!(report.delta_pp, 100.0 * (report.skill_acc - report.base_acc));
        assert!((report.delta_pp - 20.0).abs() < 1e-9);
        assert_eq!(report.status_applied, StatusApplied::Active);
        assert_eq!(report.per_instance.len(), 10);
        let ids: Vec<&str> = report.per_instance.iter().map(|o| o.id.as_str()).collect();
        let mut sorted_ids = ids.clone();
        sorted_ids.sort();
        assert_eq!(ids, sorted_ids, "per-instance outcomes ordered by id");
        let e02 = report.per_instance.iter().find(|o| o.id == "e02").unwrap();
        assert!(e02.baseline && !e02.skill, "e02 is the scripted regression");
    }

    #[test]
    fn deprecated_skill_reuses_baseline_outcomes_with_zero_skill_rollouts() {
        let dir = TempDir::new().unwrap();
        let pool = test_pool(10);
        let agent = shift_agent(&pool);
        let evaluator = exact_match(&agent, &pool);
        let mut hub = ProviderHub::open(dir.path()).unwrap();
        hub.register("base", AgentRole::BaseAgent, defaults(), Arc::new(agent));
        let ctx = EvalContext {
            hub: &hub,
            agent_id: "base",
            evaluator: &evaluator,
            opts: &opts(),
            workers: 2,
            seed: 42,
        };

        let report = paired_eval(
            &ctx,
            &stamped_skill(SkillStatus::Deprecated),
            &pool,
            &BTreeSet::new(),
        )
        .unwrap();

        assert_eq!(report.status_applied, StatusApplied::DeprecatedNoop);
        assert_eq!(report.delta_pp, 0.0);
        assert_eq!(report.repairs, 0);
        assert_eq!(report.regressions, 0);
        assert_eq!(report.base_acc, report.skill_acc);
        assert!(report.per_instance.iter().all(|o| o.baseline == o.skill));

        let records = read_call_records(&dir.path().join("calls.jsonl")).unwrap();
        let baseline_calls = records.iter().filter(|r| r.stage == TEST_BASELINE_STAGE).count();
        let skill_calls = records.iter().filter(|r| r.stage == TEST_SKILL_STAGE).count();
        assert_eq!(baseline_calls, 10);
        assert_eq!(skill_calls, 0, "a deprecated skill never touches a prompt");
    }

    #[test]
    fn train_test_overlap_is_rejected_before_any_rollout() {
        let dir = TempDir::new().unwrap();
        let pool = test_pool(4);
        let agent = shift_agent(&pool);
        let evaluator = exact_match(&agent, &pool);
        let mut hub = ProviderHub::open(dir.path()).unwrap();
        hub.register("base", AgentRole::BaseAgent, defaults(), Arc::new(agent));
        let ctx = EvalContext {
            hub: &hub,
            agent_id: "base",
            evaluator: &evaluator,
            opts: &opts(),
            workers: 2,
            seed: 42,
        };
        let training: BTreeSet<String> = ["e03".to_string(), "e01".to_string()].into();

        let err = paired_eval(&ctx, &stamped_skill(SkillStatus::Active), &pool, &training)
            .unwrap_err();

        match err {
            EvaluationError::TrainTestOverlap { ids } => {
                assert_eq!(ids, vec!["e01".to_string(), "e03".to_string()]);
            }
            other => panic!("expected overlap rejection, got {other}"),
        }
        assert!(
            read_call_records(&dir.path().join("calls.jsonl")).unwrap().is_empty(),
            "rejection happens before any provider call"
        );

        let empty = paired_eval(&ctx, &stamped_skill(SkillStatus::Active), &[], &BTreeSet::new());
        assert!(matches!(empty, Err(EvaluationError::EmptyTestPool)));
    }

    #[test]
    fn transfer_matrix_scores_each_source_against_each_evaluators_own_baseline() {
        let dir = TempDir::new().unwrap();
        let pool = test_pool(4);
        // alpha: baseline {e02}, v1 repairs e01 and e03 → +50 pp on 4.
        let alpha = ScriptedAgentBehavior::new(["e02".to_string()]).with_variant(
            "v1",
            ["e01".to_string(), "e02".to_string(), "e03".to_string()],
        );
        // beta: baseline {e01, e02}, v1 repairs e04 → +25 pp on 4.
        let beta = ScriptedAgentBehavior::new(["e01".to_string(), "e02".to_string()])
            .with_variant("v1", ["e01".to_string(), "e02".to_string(), "e04".to_string()]);
        let evaluator = exact_match(&alpha, &pool);
        let mut hub = ProviderHub::open(dir.path()).unwrap();
        hub.register("alpha", AgentRole::BaseAgent, defaults(), Arc::new(alpha));
        hub.register("beta", AgentRole::BaseAgent, defaults(), Arc::new(beta));
        let setup = TransferSetup {
            hub: &hub,
            evaluator: &evaluator,
            opts: &opts(),
            workers: 2,
            seed: 42,
        };
        let skills = vec![
            ("alpha".to_string(), stamped_skill(SkillStatus::Active)),
            ("beta".to_string(), stamped_skill(SkillStatus::Deprecated)),
        ];
        let agents = vec!["alpha".to_string(), "beta".to_string()];

        let cells = transfer_matrix(&setup, &skills, &agents, &pool, &BTreeSet::new()).unwrap();

        assert_eq!(cells.len(), 4);
        let cell = |src: &str, ev: &str| {
            cells
                .iter()
                .find(|c| c.source_model == src && c.evaluator_model == ev)
                .unwrap()
                .delta_pp
        };
        assert_eq!(cell("alpha", "alpha"), 50.0);
        assert_eq!(cell("alpha", "beta"), 25.0);
        assert_eq!(cell("beta", "alpha"), 0.0, "deprecated source row is all zero");
        assert_eq!(cell("beta", "beta"), 0.0);
    }

    fn curve_record(round: u32, baseline: &[bool], skill: &[bool]) -> RoundStatsRecord {
        RoundStatsRecord {
            round,
            stats: transition_counts(baseline, skill).unwrap(),
            guard: crate::pipeline::GuardSummary {
                checked: Vec::new(),
                regressions: Vec::new(),
            },
            outcomes: Vec::new(),
        }
    }

    /// Net-gain curve [1, 3, 2] over five paired instances.
    fn sample_curve() -> Vec<RoundStatsRecord> {
        let b = [false, false, false, true, true];
        vec![
            curve_record(1, &b, &[true, false, false, true, true]),
            curve_record(2, &b, &[true, true, true, true, true]),
            curve_record(3, &b, &[true, true, false, true, true]),
        ]
    }

    #[test]
    fn rounds_csv_carries_the_running_best_net_gain() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("rounds.csv");

        write_rounds_csv(&path, "synthetic-suite", &sample_curve()).unwrap();

        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "benchmark,round,net_gain,delta_hat,best_so_far");
        let best: Vec<&str> = lines[1..]
            .iter()
            .map(|l| l.rsplit(',').next().unwrap())
            .collect();
        assert_eq!(best, vec!["1", "3", "3"], "prefix maximum of [1, 3, 2]");
        assert!(lines[2].starts_with("synthetic-suite,2,3,0.6"));
    }

    #[test]
    fn round_curve_loads_from_run_directory_in_round_order() {
        let dir = TempDir::new().unwrap();
        for record in sample_curve() {
            let round_dir = dir.path().join(ROUNDS_DIR).join(format!("r{}", record.round));
            fs::create_dir_all(&round_dir).unwrap();
            fs::write(
                round_dir.join(ROUND_STATS_FILE),
                serde_json::to_string_pretty(&record).unwrap(),
            )
            .unwrap();
        }

        let curve = load_round_curve(dir.path()).unwrap();

        assert_eq!(curve.len(), 3);
        assert_eq!(
            curve.iter().map(|r| r.round).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(
            curve.iter().map(|r| r.stats.net_gain).collect::<Vec<_>>(),
            vec![1, 3, 2]
        );
        assert!(load_round_curve(&dir.path().join("absent")).unwrap().is_empty());
    }

    #[test]
    fn results_csv_columns_match_the_report_contract() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("results.csv");
        let report = EvalReport {
            base_acc: 0.4,
            skill_acc: 0.6,
            delta_pp: 20.0,
            repairs: 3,
            regressions: 1,
            status_applied: StatusApplied::Active,
            per_instance: Vec::new(),
        };
        let row = ResultRow::from_report("synthetic-suite", "test", "scripted", &report);
        assert_eq!(row.net_gain, 2);

        write_results_csv(&path, &[row]).unwrap();

        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "benchmark,split,model,base_acc,skill_acc,delta_pp,repairs,regressions,net_gain,status"
        );
        assert_eq!(
            lines[1],
            "synthetic-suite,test,scripted,0.4000,0.6000,20.00,3,1,2,active"
        );
    }

    #[test]
    fn token_summaries_group_the_ledger_by_stage() {
        let dir = TempDir::new().unwrap();
        let ledger = format!(
            "{LEDGER_HEADER}\n\
             base,scripted,10,5,elicit,,base,aa\n\
             base,scripted,20,5,elicit,,base,bb\n\
             aux,scripted,100,10,generate,1,aux,cc\n\
             aux,scripted,200,20,generate,2,aux,dd\n\
             aux,scripted,300,30,generate,3,aux,ee\n"
        );
        fs::write(dir.path().join("ledger.csv"), ledger).unwrap();

        let summaries = summarize_tokens(dir.path()).unwrap();

        assert_eq!(summaries.len(), 2);
        let elicit = &summaries[0];
        assert_eq!(elicit.stage, "elicit");
        assert_eq!(elicit.calls, 2);
        assert_eq!(elicit.total_tokens, 40);
        assert_eq!(elicit.mean_tokens, 20.0);
        assert_eq!(elicit.median_tokens, 20.0, "even count: mean of middle pair");
        let generate = &summaries[1];
        assert_eq!(generate.stage, "generate");
        assert_eq!(generate.calls, 3);
        assert_eq!(generate.total_tokens, 660);
        assert_eq!(generate.mean_tokens, 220.0);
        assert_eq!(generate.median_tokens, 220.0, "odd count: middle value");

        assert!(summarize_tokens(&dir.path().join("absent")).unwrap().is_empty());
    }

    #[test]
    fn emit_reports_writes_the_full_csv_surface() {
        let run = TempDir::new().unwrap();
        for record in sample_curve() {
            let round_dir = run.path().join(ROUNDS_DIR).join(format!("r{}", record.round));
            fs::create_dir_all(&round_dir).unwrap();
            fs::write(
                round_dir.join(ROUND_STATS_FILE),
                serde_json::to_string_pretty(&record).unwrap(),
            )
            .unwrap();
        }
        fs::write(
            run.path().join("ledger.csv"),
            format!("{LEDGER_HEADER}\nbase,scripted,10,5,elicit,,base,aa\n"),
        )
        .unwrap();
        let out = TempDir::new().unwrap();
        let report = EvalReport {
            base_acc: 0.4,
            skill_acc: 0.6,
            delta_pp: 20.0,
            repairs: 3,
            regressions: 1,
            status_applied: StatusApplied::Active,
            per_instance: Vec::new(),
        };
        let runs = vec![CompletedRun {
            run_dir: run.path().to_path_buf(),
            benchmark: "synthetic-suite".into(),
            split: "test".into(),
            model: "scripted".into(),
            report,
        }];
        let transfer = vec![TransferCell {
            source_model: "alpha".into(),
            evaluator_model: "beta".into(),
            delta_pp: 12.5,
        }];

        emit_reports(out.path(), &runs, &transfer).unwrap();

        let results = fs::read_to_string(out.path().join("results.csv")).unwrap();
        assert!(results.contains("synthetic-suite,test,scripted,0.4000,0.6000,20.00,3,1,2,active"));
        let rounds = fs::read_to_string(out.path().join("rounds.csv")).unwrap();
        let best: Vec<&str> = rounds
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap())
            .collect();
        assert_eq!(best, vec!["1", "3", "3"]);
        let tokens = fs::read_to_string(out.path().join("tokens.csv")).unwrap();
        assert!(tokens.contains("synthetic-suite,elicit,1,15,15.00,15.0"));
        let transfer_csv = fs::read_to_string(out.path().join("transfer.csv")).unwrap();
        assert!(transfer_csv.contains("alpha,beta,12.50"));
    }
}
