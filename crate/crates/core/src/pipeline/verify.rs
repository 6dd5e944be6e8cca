//! Paired candidate verification: every candidate is rolled out on the full
//! verification subset with the same per-instance seeds the cached no-skill
//! baseline used, so each instance contributes one (b, z) transition under
//! common random numbers.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::artifact::SkillArtifact;
use crate::gateway::rollout;
use crate::induction::{elicit_baseline, scoped_pool, BaselineSet};
use crate::model::{derive_seed, TaskInstance, Trajectory, TrajectoryStep, TrajectoryStore};
use crate::stats::{guard_report, transition_counts, PairedStats};

use super::{GuardSummary, PairedOutcome, PipelineContext, PipelineError, VER_BASELINE_FILE};

/// Ledger stage label for the cached no-skill verification rollouts.
pub const VER_BASELINE_STAGE: &str = "ver-baseline";
/// Seed/evaluator pairing context shared by the verification baseline and
/// every candidate verification, which is what makes the design paired: the
/// two arms of each instance draw the same rollout seed and the same
/// evaluator noise.
pub const VER_PAIR_CONTEXT: &str = "ver-pair";

/// Everything one candidate's verification produces: the paired counts, the
/// per-instance transitions, the guard view, and the skill-side trajectories
/// (kept for feedback prompts, never persisted into the generation prompt).
#[derive(Debug)]
pub struct CandidateVerification {
    pub stats: PairedStats,
    pub outcomes: Vec<PairedOutcome>,
    pub guard: GuardSummary,
    pub skill_trajectories: BTreeMap<String, Trajectory>,
}

/// Rolls out the empty intervention once per verification instance and caches
/// the outcomes in `ver_baseline.jsonl`. Re-running with the same seed issues
/// zero provider calls. These records are never exposed to induction or
/// first-round generation.
pub fn cache_verification_baseline(
    ctx: &PipelineContext,
    verification: &[TaskInstance],
) -> Result<BaselineSet, PipelineError> {
    let mut store = TrajectoryStore::open(ctx.run_dir.join(VER_BASELINE_FILE))?;
    let set = elicit_baseline(
        &ctx.hub,
        &ctx.base_agent,
        verification,
        &ctx.evaluator,
        &mut store,
        &ctx.rollout_opts,
        ctx.rollout_workers,
        ctx.seed(),
        VER_BASELINE_STAGE,
        VER_PAIR_CONTEXT,
    )?;
    Ok(set)
}

/// Loads the cached verification baseline for a stage that must not elicit it
/// itself. A missing or incomplete cache is an ordering error: the caching
/// stage has to run first.
pub fn load_verification_baseline(
    ctx: &PipelineContext,
    verification: &[TaskInstance],
) -> Result<BaselineSet, PipelineError> {
    let path = ctx.run_dir.join(VER_BASELINE_FILE);
    if !path.exists() {
        return Err(PipelineError::VerificationBaselineMissing {
            detail: format!("{} does not exist", path.display()),
        });
    }
    let store = TrajectoryStore::open(&path)?;
    let mut records = Vec::with_capacity(verification.len());
    for x in verification {
        let record = store.get(&x.id).ok_or_else(|| {
            PipelineError::VerificationBaselineMissing {
                detail: format!("no cached baseline for instance {}", x.id),
            }
        })?;
        records.push(record.clone());
    }
    Ok(BaselineSet::from_records(records))
}

/// Rolls out one candidate on every verification instance with the cached
/// pairing seeds and computes the paired statistics against the baseline
/// outcomes. Per-instance rollout or scoring errors become z=0 with a
/// diagnostic instead of aborting the round.
pub fn verify_candidate(
    ctx: &PipelineContext,
    skill: &SkillArtifact,
    round: u32,
    verification: &[TaskInstance],
    ver_baseline: &BaselineSet,
) -> Result<CandidateVerification, PipelineError> {
    let mut ordered: Vec<&TaskInstance> = verification.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut baseline_bits = Vec::with_capacity(ordered.len());
    for x in &ordered {
        let record = ver_baseline.records.get(&x.id).ok_or_else(|| {
            PipelineError::VerificationBaselineMissing {
                detail: format!("no cached baseline for instance {}", x.id),
            }
        })?;
        baseline_bits.push(record.outcome.outcome);
    }

    let run_one = |x: &TaskInstance| -> (bool, Option<String>, Trajectory) {
        let seed = derive_seed(ctx.seed(), VER_PAIR_CONTEXT, &x.id);
        let tau = match rollout(
            &ctx.hub,
            &ctx.base_agent,
            x,
            Some(skill),
            seed,
            "verify",
            Some(round),
            &ctx.rollout_opts,
        ) {
            Ok(tau) => tau,
            Err(err) => {
                let detail = format!("rollout error: {err}");
                log::warn!("round {round}, instance {}: {detail}; scoring as failure", x.id);
                let tau = Trajectory {
                    instance_id: x.id.clone(),
                    steps: vec![TrajectoryStep::Observation {
                        index: 0,
                        content: detail.clone(),
                    }],
                    final_output: None,
                    token_usage: Default::default(),
                };
                return (false, Some(detail), tau);
            }
        };
        match ctx.evaluator.evaluate(x, &tau, VER_PAIR_CONTEXT) {
            Ok(outcome) => (outcome.outcome, outcome.diagnostic, tau),
            Err(err) => {
                let detail = format!("evaluation error: {err}");
                log::warn!("round {round}, instance {}: {detail}; scoring as failure", x.id);
                (false, Some(detail), tau)
            }
        }
    };

    let results: Vec<(bool, Option<String>, Trajectory)> = scoped_pool(ctx.rollout_workers)
        .install(|| ordered.par_iter().map(|x| run_one(x)).collect());

    let skill_bits: Vec<bool> = results.iter().map(|(z, _, _)| *z).collect();
    let stats = transition_counts(&baseline_bits, &skill_bits)?;
    let report = guard_report(&baseline_bits, &skill_bits, ctx.guard_cap)?;
    let guard = GuardSummary {
        checked: report
            .checked
            .iter()
            .map(|&j| ordered[j].id.clone())
            .collect(),
        regressions: report
            .regressions
            .iter()
            .map(|&j| ordered[j].id.clone())
            .collect(),
    };

    let mut outcomes = Vec::with_capacity(ordered.len());
    let mut skill_trajectories = BTreeMap::new();
    for ((x, &b), (z, diagnostic, tau)) in
        ordered.iter().zip(&baseline_bits).zip(results.into_iter())
    {
        outcomes.push(PairedOutcome {
            id: x.id.clone(),
            baseline: b,
            skill: z,
            diagnostic,
        });
        skill_trajectories.insert(x.id.clone(), tau);
    }

    Ok(CandidateVerification {
        stats,
        outcomes,
        guard,
        skill_trajectories,
    })
}
