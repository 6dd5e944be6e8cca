//! Batch command-line surface for the skill-synthesis pipeline: stage
//! commands over a run directory, paired held-out evaluation, cross-model
//! transfer studies, the synthetic-agent simulator, and CSV reporting.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing upstream
//! artifact, 4 provider failure after retries, 5 gate-deprecated
//! (`synthesize` only; all artifacts are still written).

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skillforge::artifact::{parse_skill, BundleError, SkillArtifact, SkillStatus};
use skillforge::config::{
    load_config, load_instances, ConfigError, LoadedConfig, Overrides, TransferConfig,
};
use skillforge::eval::{
    emit_reports, load_round_curve, paired_eval, summarize_tokens, transfer_matrix,
    write_rounds_csv, write_tokens_csv, write_transfer_csv, CompletedRun, EvalContext, EvalReport,
    EvaluationError, TransferSetup,
};
use skillforge::gateway::{inject, AgentRole, GatewayError, ProviderHub, RolloutOptions};
use skillforge::induction::{family_prompt, rollout_summary_prompt, Polarity};
use skillforge::model::{DatasetSplit, Evaluator, TaskInstance};
use skillforge::pipeline::{
    load_diagnostic, load_induction_baseline, load_split, load_verification_baseline, round_dir,
    run_pipeline, stage_elicit, stage_induce, verify_candidate, PipelineContext, PipelineError,
    RoundStatsRecord, RunLock, BASELINE_FILE, DIAGNOSTIC_FILE, ROUNDS_DIR, ROUND_STATS_FILE,
    SELECTED_DIR,
};
use skillforge::simlab::{
    analytic_delta, simulate_verification, write_summary_json, write_trials_csv, SimError,
    SyntheticTaskModel,
};
use skillforge::stats::{gate_decision, gate_threshold, GateConfig, GateOutcome};

const EVAL_REPORT_FILE: &str = "eval_report.json";
const DRY_RUN_FILE: &str = "dry_run_prompts.jsonl";
const REPORTS_DIR: &str = "reports";

#[derive(Parser)]
#[command(
    name = "skillforge",
    version,
    about = "Synthesizes one auditable inference-time skill for an LLM agent \
             from its own success and failure trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Run directory receiving artifacts (created if absent).
    #[arg(long, value_name = "DIR")]
    run_dir: PathBuf,
    /// Override the configured root seed; the effective value is recorded in
    /// the run's config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured pipeline worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Assemble the next stage's prompts into dry_run_prompts.jsonl and exit
    /// without a single provider call.
    #[arg(long)]
    dry_run: bool,
}

impl StageArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            workers: self.workers,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory for trials.csv and summary.json.
    #[arg(long, value_name = "DIR")]
    run_dir: PathBuf,
    /// Monte-Carlo trials.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Verification-subset size.
    #[arg(long, default_value_t = 40)]
    m: usize,
    /// Per-instance baseline success probability.
    #[arg(long, default_value_t = 0.5)]
    baseline: f64,
    /// Per-instance repair probability (baseline failure flipped to success).
    #[arg(long, default_value_t = 0.3)]
    p01: f64,
    /// Per-instance regression probability (baseline success flipped to failure).
    #[arg(long, default_value_t = 0.1)]
    p10: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Absolute net-gain floor of the deployment gate.
    #[arg(long, default_value_t = 2)]
    gate_abs: u64,
    /// Relative net-gain fraction of the deployment gate.
    #[arg(long, default_value_t = 0.05)]
    gate_rel: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Split the pool and cache no-skill baselines on both subsets.
    Elicit(StageArgs),
    /// Compress the induction baselines into the diagnostic summary.
    Induce(StageArgs),
    /// Run the full pipeline: elicit, induce, generate-verify-refine, gate.
    Synthesize(StageArgs),
    /// Re-verify the latest persisted round candidate against the cached
    /// verification baseline.
    Verify(StageArgs),
    /// Paired held-out evaluation of the selected skill.
    Evaluate(StageArgs),
    /// Cross-model transfer matrix over completed runs.
    Transfer(StageArgs),
    /// Monte-Carlo check of the verification statistics on a synthetic agent.
    Simulate(SimulateArgs),
    /// Emit the CSV report surface for a completed run.
    Report(StageArgs),
}

// ---------------------------------------------------------------------------
// Error → exit-code mapping
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum AppError {
    Config(ConfigError),
    Pipeline(PipelineError),
    Evaluation(EvaluationError),
    Bundle(BundleError),
    Gateway(GatewayError),
    Sim(SimError),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A required upstream artifact is absent (exit 3).
    Missing { what: String },
    /// The invocation itself is wrong (exit 2).
    Usage { message: String },
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(e) => write!(f, "{e}"),
            AppError::Pipeline(e) => write!(f, "{e}"),
            AppError::Evaluation(e) => write!(f, "{e}"),
            AppError::Bundle(e) => write!(f, "{e}"),
            AppError::Gateway(e) => write!(f, "{e}"),
            AppError::Sim(e) => write!(f, "{e}"),
            AppError::Io { path, source } => write!(f, "io at {}: {source}", path.display()),
            AppError::Missing { what } => write!(f, "missing upstream artifact: {what}"),
            AppError::Usage { message } => write!(f, "{message}"),
        }
    }
}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for AppError {
            fn from(e: $ty) -> Self {
                AppError::$variant(e)
            }
        }
    };
}
from_err!(Config, ConfigError);
from_err!(Pipeline, PipelineError);
from_err!(Evaluation, EvaluationError);
from_err!(Bundle, BundleError);
from_err!(Gateway, GatewayError);
from_err!(Sim, SimError);

fn pipeline_exit_code(e: &PipelineError) -> u8 {
    if e.is_provider_failure() {
        return 4;
    }
    match e {
        PipelineError::MissingUpstream { .. } | PipelineError::VerificationBaselineMissing { .. } => 3,
        _ => 1,
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(ConfigError::Provider(_)) => 4,
            AppError::Config(_) | AppError::Usage { .. } | AppError::Sim(_) => 2,
            AppError::Pipeline(e) => pipeline_exit_code(e),
            AppError::Evaluation(e) => match e {
                EvaluationError::TrainTestOverlap { .. } | EvaluationError::EmptyTestPool => 2,
                EvaluationError::Gateway(GatewayError::Provider(_)) => 4,
                EvaluationError::Pipeline(inner) => pipeline_exit_code(inner),
                _ => 1,
            },
            AppError::Gateway(GatewayError::Provider(_)) => 4,
            AppError::Missing { .. } => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn build(args: &StageArgs) -> Result<(LoadedConfig, PipelineContext), AppError> {
    let loaded = load_config(&args.config)?;
    let ctx = loaded.build_context(&args.run_dir, args.overrides())?;
    Ok((loaded, ctx))
}

fn status_str(outcome: GateOutcome) -> &'static str {
    match outcome {
        GateOutcome::Active => "active",
        GateOutcome::Deprecated => "deprecated",
    }
}

/// Latest persisted round (highest index) and its bundle directory.
fn latest_round(run_dir: &Path) -> Result<(u32, PathBuf), AppError> {
    let rounds = run_dir.join(ROUNDS_DIR);
    let mut best: Option<u32> = None;
    if rounds.exists() {
        for entry in fs::read_dir(&rounds).map_err(io_err(&rounds))? {
            let entry = entry.map_err(io_err(&rounds))?;
            let name = entry.file_name();
            if let Some(round) = name
                .to_str()
                .and_then(|n| n.strip_prefix('r'))
                .and_then(|n| n.parse::<u32>().ok())
            {
                best = Some(best.map_or(round, |b| b.max(round)));
            }
        }
    }
    let round = best.ok_or_else(|| AppError::Missing {
        what: format!("{ROUNDS_DIR}/ (run the synthesize stage first)"),
    })?;
    Ok((round, round_dir(run_dir, round)))
}

fn load_selected_skill(run_dir: &Path) -> Result<SkillArtifact, AppError> {
    let dir = run_dir.join(SELECTED_DIR);
    if !dir.exists() {
        return Err(AppError::Missing {
            what: format!("{SELECTED_DIR}/ (run the synthesize stage first)"),
        });
    }
    Ok(parse_skill(&dir)?)
}

fn pool_ids(pool: &[TaskInstance]) -> BTreeSet<String> {
    pool.iter().map(|x| x.id.clone()).collect()
}

// ---------------------------------------------------------------------------
// Dry run: assemble the next stage's prompts, zero provider calls
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct PromptPreview {
    stage: &'static str,
    agent: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    system: Option<String>,
    user: String,
}

fn rollout_previews(
    stage: &'static str,
    system_prompt: &str,
    skill: Option<&SkillArtifact>,
    pool: &[TaskInstance],
) -> Result<Vec<PromptPreview>, AppError> {
    let assembled = inject(system_prompt, skill)?;
    let mut ordered: Vec<&TaskInstance> = pool.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(ordered
        .into_iter()
        .map(|x| PromptPreview {
            stage,
            agent: "base",
            instance: Some(x.id.clone()),
            system: Some(assembled.system_prompt.clone()),
            user: format!("TASK INSTANCE {}\n{}", x.id, x.payload),
        })
        .collect())
}

/// Assembles the prompts of the next pending stage from the artifacts already
/// on disk and writes them to dry_run_prompts.jsonl. Never touches a
/// provider.
fn dry_run(loaded: &LoadedConfig, ctx: &PipelineContext) -> Result<ExitCode, AppError> {
    let run_dir = &ctx.run_dir;
    let mut previews: Vec<PromptPreview> = Vec::new();

    if !run_dir.join(BASELINE_FILE).exists() {
        previews.extend(rollout_previews(
            "elicit",
            &ctx.rollout_opts.baseline_system_prompt,
            None,
            &ctx.pool,
        )?);
    } else if !run_dir.join(DIAGNOSTIC_FILE).exists() {
        let split = load_split(ctx)?;
        let baseline = load_induction_baseline(ctx, &split)?;
        previews.push(PromptPreview {
            stage: "induce",
            agent: "aux",
            instance: None,
            system: None,
            user: family_prompt(&ctx.induction, &split.induction).map_err(PipelineError::from)?,
        });
        for (ids, polarity) in [
            (&baseline.failures, Polarity::Failure),
            (&baseline.successes, Polarity::Success),
        ] {
            for id in ids {
                let record = &baseline.records[id];
                let x = split
                    .induction
                    .iter()
                    .find(|x| &x.id == id)
                    .expect("baseline ids come from the induction subset");
                previews.push(PromptPreview {
                    stage: "induce",
                    agent: "aux",
                    instance: Some(id.clone()),
                    system: None,
                    user: rollout_summary_prompt(x, &record.trajectory, polarity),
                });
            }
        }
    } else if !run_dir.join(SELECTED_DIR).exists() {
        let z = load_diagnostic(run_dir)?;
        previews.push(PromptPreview {
            stage: "generate",
            agent: "aux",
            instance: None,
            system: None,
            user: skillforge::pipeline::build_generation_prompt(ctx, &z),
        });
    } else {
        let skill = load_selected_skill(run_dir)?;
        let test = loaded.load_test_instances()?;
        previews.extend(rollout_previews(
            "test-baseline",
            &ctx.rollout_opts.baseline_system_prompt,
            None,
            &test,
        )?);
        if skill.status == SkillStatus::Active {
            previews.extend(rollout_previews(
                "test-skill",
                &ctx.rollout_opts.baseline_system_prompt,
                Some(&skill),
                &test,
            )?);
        }
    }

    let path = run_dir.join(DRY_RUN_FILE);
    let mut file = fs::File::create(&path).map_err(io_err(&path))?;
    for preview in &previews {
        let line = serde_json::to_string(preview).expect("previews serialize");
        writeln!(file, "{line}").map_err(io_err(&path))?;
    }
    println!(
        "dry run: assembled {} prompt(s) into {} (no provider calls)",
        previews.len(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_elicit(args: StageArgs) -> Result<ExitCode, AppError> {
    let (loaded, ctx) = build(&args)?;
    if args.dry_run {
        return dry_run(&loaded, &ctx);
    }
    let _lock = RunLock::acquire(&args.run_dir)?;
    let out = stage_elicit(&ctx)?;
    println!(
        "elicited baselines: induction {} instances ({} failures, {} successes), \
         verification {} instances ({} failures, {} successes)",
        out.split.induction.len(),
        out.baseline.failures.len(),
        out.baseline.successes.len(),
        out.split.verification.len(),
        out.ver_baseline.failures.len(),
        out.ver_baseline.successes.len(),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_induce(args: StageArgs) -> Result<ExitCode, AppError> {
    let (loaded, ctx) = build(&args)?;
    if args.dry_run {
        return dry_run(&loaded, &ctx);
    }
    let _lock = RunLock::acquire(&args.run_dir)?;
    let out = stage_induce(&ctx)?;
    println!(
        "compressed diagnostics: {} failure clusters, {} success clusters, {} contrasts (hash {})",
        out.summary.failures.len(),
        out.summary.successes.len(),
        out.summary.contrasts.len(),
        out.summary.content_hash(),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_synthesize(args: StageArgs) -> Result<ExitCode, AppError> {
    let (loaded, ctx) = build(&args)?;
    if args.dry_run {
        return dry_run(&loaded, &ctx);
    }
    let run = run_pipeline(&ctx)?;
    for record in &run.rounds {
        println!(
            "round {}: net gain {:+} (delta {:+.4}), {} guard regressions",
            record.round,
            record.stats.net_gain,
            record.stats.delta_hat,
            record.guard.regressions.len(),
        );
    }
    let m = run.split.verification.len();
    println!(
        "selected round {} of {}; gate threshold {} on m={}; status {}",
        run.selected,
        run.rounds.len(),
        gate_threshold(m, &ctx.gate),
        m,
        status_str(run.final_status),
    );
    if run.final_status == GateOutcome::Deprecated {
        // The deprecated bundle is persisted for audit; the distinct code
        // lets batch drivers count gate rejections.
        return Ok(ExitCode::from(5));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: StageArgs) -> Result<ExitCode, AppError> {
    let (loaded, ctx) = build(&args)?;
    if args.dry_run {
        return dry_run(&loaded, &ctx);
    }
    let _lock = RunLock::acquire(&args.run_dir)?;
    let split = load_split(&ctx)?;
    let ver_baseline = load_verification_baseline(&ctx, &split.verification)?;
    let (round, bundle_dir) = latest_round(&args.run_dir)?;
    let skill = parse_skill(&bundle_dir)?;
    let verification = verify_candidate(&ctx, &skill, round, &split.verification, &ver_baseline)?;
    write_json(
        &bundle_dir.join(ROUND_STATS_FILE),
        &RoundStatsRecord {
            round,
            stats: verification.stats.clone(),
            guard: verification.guard.clone(),
            outcomes: verification.outcomes.clone(),
        },
    )?;
    let decision = gate_decision(&verification.stats, &ctx.gate);
    println!(
        "round {round}: net gain {:+} (delta {:+.4}) on m={}, gate threshold {} → would be {}",
        verification.stats.net_gain,
        verification.stats.delta_hat,
        verification.stats.m,
        gate_threshold(verification.stats.m, &ctx.gate),
        status_str(decision),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: StageArgs) -> Result<ExitCode, AppError> {
    let (loaded, ctx) = build(&args)?;
    if args.dry_run {
        return dry_run(&loaded, &ctx);
    }
    let _lock = RunLock::acquire(&args.run_dir)?;
    let skill = load_selected_skill(&args.run_dir)?;
    let test = loaded.load_test_instances()?;
    let training = pool_ids(&ctx.pool);
    let ectx = EvalContext {
        hub: &ctx.hub,
        agent_id: "base",
        evaluator: &ctx.evaluator,
        opts: &ctx.rollout_opts,
        workers: ctx.rollout_workers,
        seed: ctx.seed(),
    };
    let report = paired_eval(&ectx, &skill, &test, &training)?;
    write_json(&args.run_dir.join(EVAL_REPORT_FILE), &report)?;
    println!(
        "held-out: base {:.1}% → skill {:.1}% ({:+.2} pp) on {} instances; \
         {} repairs, {} regressions; status {}",
        100.0 * report.base_acc,
        100.0 * report.skill_acc,
        report.delta_pp,
        report.per_instance.len(),
        report.repairs,
        report.regressions,
        report.status_applied.as_str(),
    );
    Ok(ExitCode::SUCCESS)
}

fn read_source_training_ids(run_dir: &Path) -> Result<BTreeSet<String>, AppError> {
    let path = run_dir.join("split.json");
    if !path.exists() {
        return Err(AppError::Missing {
            what: format!("{} (not a completed run directory?)", path.display()),
        });
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let split: DatasetSplit = serde_json::from_str(&text).map_err(|e| AppError::Usage {
        message: format!("{} is not a valid split record: {e}", path.display()),
    })?;
    Ok(split
        .induction
        .iter()
        .chain(&split.verification)
        .map(|x| x.id.clone())
        .collect())
}

fn transfer_section(loaded: &LoadedConfig) -> Result<&TransferConfig, AppError> {
    loaded.config.transfer.as_ref().ok_or(AppError::Usage {
        message: "the config has no transfer section; add transfer.{test_instances, evaluators, sources}"
            .to_string(),
    })
}

fn cmd_transfer(args: StageArgs) -> Result<ExitCode, AppError> {
    let loaded = load_config(&args.config)?;
    let transfer = transfer_section(&loaded)?;
    let test = load_instances(&loaded.resolve(&transfer.test_instances))?;

    let mut training: BTreeSet<String> = BTreeSet::new();
    let mut skills: Vec<(String, SkillArtifact)> = Vec::new();
    for source in &transfer.sources {
        let source_dir = loaded.resolve(&source.run_dir);
        training.extend(read_source_training_ids(&source_dir)?);
        let dir = source_dir.join(SELECTED_DIR);
        if !dir.exists() {
            return Err(AppError::Missing {
                what: format!("{} (source {} has no selected skill)", dir.display(), source.label),
            });
        }
        skills.push((source.label.clone(), parse_skill(&dir)?));
    }

    fs::create_dir_all(&args.run_dir).map_err(io_err(&args.run_dir))?;
    let _lock = RunLock::acquire(&args.run_dir)?;
    let mut hub = ProviderHub::open(&args.run_dir).map_err(AppError::Gateway)?;
    for named in &transfer.evaluators {
        hub.register(
            &named.id,
            AgentRole::BaseAgent,
            named.agent.request_defaults(),
            named.agent.build_provider().map_err(ConfigError::Provider)?,
        );
    }
    let evaluator = Evaluator::new(loaded.config.evaluator.clone());
    let opts = RolloutOptions::new(loaded.config.rollout.system_prompt.clone())
        .with_step_cap(loaded.config.rollout.step_cap);
    let setup = TransferSetup {
        hub: &hub,
        evaluator: &evaluator,
        opts: &opts,
        workers: args.workers.unwrap_or(loaded.config.workers.pipeline),
        seed: args.seed.unwrap_or(loaded.config.split.seed),
    };
    let agents: Vec<String> = transfer.evaluators.iter().map(|n| n.id.clone()).collect();
    let cells = transfer_matrix(&setup, &skills, &agents, &test, &training)?;

    let csv_path = args.run_dir.join("transfer.csv");
    write_transfer_csv(&csv_path, &cells)?;
    for cell in &cells {
        println!(
            "{} → {}: {:+.2} pp",
            cell.source_model, cell.evaluator_model, cell.delta_pp
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, AppError> {
    let model = SyntheticTaskModel::uniform(args.m, args.baseline, args.p01, args.p10, args.seed)?;
    let gate = GateConfig {
        g_abs: args.gate_abs,
        g_rel: args.gate_rel,
    };
    let sim = simulate_verification(&model, args.trials, &gate);
    fs::create_dir_all(&args.run_dir).map_err(io_err(&args.run_dir))?;
    let trials_path = args.run_dir.join("trials.csv");
    let summary_path = args.run_dir.join("summary.json");
    write_trials_csv(&trials_path, &sim)?;
    write_summary_json(&summary_path, &sim)?;
    let analytic = analytic_delta(&model);
    println!(
        "simulated {} trials on m={}: analytic delta {:+.4}, mean estimate {:+.4} \
         (bias {:+.5}), variance {:.6}, gate activation rate {:.3}",
        sim.trials,
        sim.m,
        analytic,
        sim.mean_delta_hat,
        sim.mean_delta_hat - analytic,
        sim.variance_delta_hat,
        sim.gate_activation_rate,
    );
    println!("wrote {} and {}", trials_path.display(), summary_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: StageArgs) -> Result<ExitCode, AppError> {
    let loaded = load_config(&args.config)?;
    if !args.run_dir.join(SELECTED_DIR).exists() {
        return Err(AppError::Missing {
            what: format!("{SELECTED_DIR}/ (run the synthesize stage first)"),
        });
    }
    let out_dir = args.run_dir.join(REPORTS_DIR);
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let benchmark = loaded.config.benchmark.clone();

    let eval_path = args.run_dir.join(EVAL_REPORT_FILE);
    if eval_path.exists() {
        let text = fs::read_to_string(&eval_path).map_err(io_err(&eval_path))?;
        let report: EvalReport = serde_json::from_str(&text).map_err(|e| AppError::Usage {
            message: format!("{} is not a valid evaluation report: {e}", eval_path.display()),
        })?;
        let runs = vec![CompletedRun {
            run_dir: args.run_dir.clone(),
            benchmark: benchmark.clone(),
            split: "test".to_string(),
            model: loaded.config.agent.model_name().to_string(),
            report,
        }];
        emit_reports(&out_dir, &runs, &[])?;
        println!(
            "wrote results.csv, rounds.csv, tokens.csv under {}",
            out_dir.display()
        );
    } else {
        let curve = load_round_curve(&args.run_dir)?;
        write_rounds_csv(&out_dir.join("rounds.csv"), &benchmark, &curve)?;
        let tokens = summarize_tokens(&args.run_dir)?;
        write_tokens_csv(&out_dir.join("tokens.csv"), &benchmark, &tokens)?;
        println!(
            "wrote rounds.csv and tokens.csv under {} (no held-out evaluation found; \
             run the evaluate stage for results.csv)",
            out_dir.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run(command: Command) -> Result<ExitCode, AppError> {
    match command {
        Command::Elicit(args) => cmd_elicit(args),
        Command::Induce(args) => cmd_induce(args),
        Command::Synthesize(args) => cmd_synthesize(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Transfer(args) => cmd_transfer(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
