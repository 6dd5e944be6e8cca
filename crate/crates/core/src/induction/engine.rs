//! Compresses baseline rollouts into the diagnostic summary fed to skill
//! generation: per-rollout summaries → embeddings → adaptive clustering →
//! cluster summaries → nearest-neighbor contrastive observations.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::embed::{Embedder, EmbedderError};
use super::geometry::{choose_k, cosine_distance, kmeans};
use crate::gateway::{rollout, ChatMessage, ChatRequest, GatewayError, ProviderHub, RolloutOptions};
use crate::model::{
    derive_seed, Evaluator, OutcomeRecord, RolloutRecord, StoreError, TaskInstance, Trajectory,
    TrajectoryStep, TrajectoryStore,
};
use crate::Embedding;

/// Whether a rollout ended in success or failure; names the two strata of
/// the baseline set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Failure,
    Success,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Failure => "failure",
            Polarity::Success => "success",
        }
    }
}

/// One rollout's root-cause (failure) or recipe (success) summary, plus the
/// embedding of `[instance ; summary]` used for clustering and pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub instance_id: String,
    pub polarity: Polarity,
    pub text: String,
    pub embedding: Embedding,
}

/// A cluster-level synthesis over same-polarity rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub polarity: Polarity,
    pub member_ids: Vec<String>,
    pub text: String,
}

/// A behavior present in the paired success and absent in the failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastObservation {
    pub failure_id: String,
    pub success_id: String,
    pub text: String,
    pub same_task: bool,
}

/// The compressed induction output handed to generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub a0: String,
    pub failures: Vec<ClusterSummary>,
    pub successes: Vec<ClusterSummary>,
    pub contrasts: Vec<ContrastObservation>,
}

impl DiagnosticSummary {
    /// Canonical serialization: struct field order is fixed, list orders are
    /// deterministic by construction, so equal summaries serialize to equal
    /// bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostic summary serializes")
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Audit record for every candidate contrast pair that reached the same-task
/// check, whether or not it survived it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastAuditEntry {
    pub failure_id: String,
    pub success_id: String,
    pub distance: f64,
    pub same_task: bool,
}

/// Baseline rollouts under the empty intervention, with outcome strata.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BaselineSet {
    pub records: BTreeMap<String, RolloutRecord>,
    /// Instance ids with outcome 0, sorted.
    pub failures: Vec<String>,
    /// Instance ids with outcome 1, sorted.
    pub successes: Vec<String>,
}

impl BaselineSet {
    pub fn from_records(records: impl IntoIterator<Item = RolloutRecord>) -> Self {
        let records: BTreeMap<String, RolloutRecord> = records
            .into_iter()
            .map(|r| (r.instance_id.clone(), r))
            .collect();
        let (mut failures, mut successes) = (Vec::new(), Vec::new());
        for (id, rec) in &records {
            if rec.outcome.outcome {
                successes.push(id.clone());
            } else {
                failures.push(id.clone());
            }
        }
        Self {
            records,
            failures,
            successes,
        }
    }

    pub fn polarity_of(&self, id: &str) -> Option<Polarity> {
        self.records.get(id).map(|r| {
            if r.outcome.outcome {
                Polarity::Success
            } else {
                Polarity::Failure
            }
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Induction-stage knobs; defaults follow the reference configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct InductionConfig {
    /// Desired mean cluster size when choosing k.
    pub target_cluster_size: usize,
    pub kmin: usize,
    pub kmax: usize,
    /// Hard cap on the number of failure clusters and success clusters kept.
    pub max_clusters: usize,
    /// Maximum failure–success pairs considered for contrast.
    pub contrast_cap: usize,
    /// Instances sampled into the task-family abstraction prompt.
    pub abs_sample_cap: usize,
    /// Member (instance, trajectory, summary) triples shown per cluster prompt.
    pub summ_triple_cap: usize,
    /// Parallelism for per-rollout and per-cluster summarization.
    pub workers: usize,
    /// Run root seed; all stage seeds derive from it.
    pub seed: u64,
}

impl Default for InductionConfig {
    fn default() -> Self {
        Self {
            target_cluster_size: 15,
            kmin: 2,
            kmax: 8,
            max_clusters: 8,
            contrast_cap: 20,
            abs_sample_cap: 20,
            summ_triple_cap: 10,
            workers: 4,
            seed: 42,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InductionError {
    #[error("induction requires a non-empty instance set")]
    EmptyInput,
    #[error("auxiliary model returned an empty reply for {task}")]
    EmptyAuxReply { task: String },
    #[error("baseline record missing for instance {id}")]
    MissingBaseline { id: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Embedding(#[from] EmbedderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("embedding export failed: {0}")]
    Export(#[from] csv::Error),
}

/// Bundles the collaborators every induction operation needs.
pub struct InductionContext<'a> {
    pub hub: &'a ProviderHub,
    pub aux_agent: &'a str,
    pub embedder: &'a dyn Embedder,
    pub config: &'a InductionConfig,
}

const AUX_SYSTEM_PROMPT: &str =
    "You analyze agent rollouts and reply exactly in the requested format.";
/// Ledger stage label for every auxiliary call made during induction.
pub const INDUCE_STAGE: &str = "induce";

fn aux_request(hub: &ProviderHub, aux_agent: &str, prompt: String) -> ChatRequest {
    let defaults = hub
        .defaults(aux_agent)
        .expect("auxiliary agent is registered")
        .clone();
    ChatRequest {
        model: defaults.model,
        messages: vec![
            ChatMessage::system(AUX_SYSTEM_PROMPT),
            ChatMessage::user(prompt),
        ],
        tools: None,
        temperature: defaults.temperature,
        max_tokens: defaults.max_tokens,
        seed: None,
    }
}

fn aux_call(ctx: &InductionContext, task: &str, prompt: String) -> Result<String, InductionError> {
    let request = aux_request(ctx.hub, ctx.aux_agent, prompt);
    let response = ctx.hub.call(ctx.aux_agent, INDUCE_STAGE, None, &request)?;
    let text = response.content.trim().to_string();
    if text.is_empty() {
        return Err(InductionError::EmptyAuxReply {
            task: task.to_string(),
        });
    }
    Ok(text)
}

/// Renders a trajectory for auxiliary prompts: one line per step plus the
/// final output.
pub fn render_trajectory(tau: &Trajectory) -> String {
    let mut out = String::new();
    for step in &tau.steps {
        match step {
            TrajectoryStep::AgentMessage { content, .. } => {
                out.push_str(&format!("agent: {content}\n"));
            }
            TrajectoryStep::ToolCall {
                name,
                arguments,
                result,
                ..
            } => {
                out.push_str(&format!("tool {name}({arguments}) -> {result}\n"));
            }
            TrajectoryStep::Observation { content, .. } => {
                out.push_str(&format!("obs: {content}\n"));
            }
        }
    }
    match &tau.final_output {
        Some(f) => out.push_str(&format!("final: {f}")),
        None => out.push_str("final: <none>"),
    }
    out
}

pub(crate) fn scoped_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool construction")
}

/// Rolls the agent out once per instance under the empty intervention,
/// scoring each trajectory; results are cached in the trajectory store, so a
/// re-run issues zero provider calls. Per-instance rollout or scoring errors
/// become failed outcomes with a diagnostic instead of aborting the batch.
///
/// `stage` labels the calls in the ledger; `context` feeds per-instance
/// rollout-seed derivation and evaluator sampling, so later paired rollouts
/// of the same instances can share both by passing the same context.
#[allow(clippy::too_many_arguments)]
pub fn elicit_baseline(
    hub: &ProviderHub,
    agent_id: &str,
    instances: &[TaskInstance],
    evaluator: &Evaluator,
    store: &mut TrajectoryStore,
    opts: &RolloutOptions,
    workers: usize,
    seed: u64,
    stage: &str,
    context: &str,
) -> Result<BaselineSet, InductionError> {
    if instances.is_empty() {
        return Err(InductionError::EmptyInput);
    }
    let mut missing: Vec<&TaskInstance> = instances
        .iter()
        .filter(|x| !store.contains(&x.id))
        .collect();
    missing.sort_by(|a, b| a.id.cmp(&b.id));

    let run_one = |x: &TaskInstance| -> RolloutRecord {
        let rollout_seed = derive_seed(seed, context, &x.id);
        match rollout(hub, agent_id, x, None, rollout_seed, stage, None, opts) {
            Ok(tau) => match evaluator.evaluate(x, &tau, context) {
                Ok(outcome) => RolloutRecord {
                    instance_id: x.id.clone(),
                    trajectory: tau,
                    outcome,
                },
                Err(err) => RolloutRecord {
                    instance_id: x.id.clone(),
                    trajectory: tau,
                    outcome: OutcomeRecord {
                        instance_id: x.id.clone(),
                        success_prob: 0.0,
                        outcome: false,
                        sampled: false,
                        diagnostic: Some(format!("evaluation error: {err}")),
                    },
                },
            },
            Err(err) => {
                let message = format!("rollout error: {err}");
                log::warn!("baseline rollout for {} failed: {err}", x.id);
                RolloutRecord {
                    instance_id: x.id.clone(),
                    trajectory: Trajectory {
                        instance_id: x.id.clone(),
                        steps: vec![TrajectoryStep::Observation {
                            index: 0,
                            content: message.clone(),
                        }],
                        final_output: None,
                        token_usage: Default::default(),
                    },
                    outcome: OutcomeRecord {
                        instance_id: x.id.clone(),
                        success_prob: 0.0,
                        outcome: false,
                        sampled: false,
                        diagnostic: Some(message),
                    },
                }
            }
        }
    };

    let computed: Vec<RolloutRecord> = if workers > 1 {
        scoped_pool(workers).install(|| missing.par_iter().map(|x| run_one(x)).collect())
    } else {
        missing.iter().map(|x| run_one(x)).collect()
    };
    for record in computed {
        store.insert(record)?;
    }

    let mut records = Vec::with_capacity(instances.len());
    for x in instances {
        let rec = store
            .get(&x.id)
            .ok_or_else(|| InductionError::MissingBaseline { id: x.id.clone() })?;
        records.push(rec.clone());
    }
    Ok(BaselineSet::from_records(records))
}

/// One auxiliary call describing the task family as a whole, over a seeded
/// sample of at most `abs_sample_cap` instances.
/// The task-family abstraction prompt over the (sampled) induction
/// instances. Pure: usable for prompt preview without a provider.
pub fn family_prompt(
    config: &InductionConfig,
    inputs: &[TaskInstance],
) -> Result<String, InductionError> {
    if inputs.is_empty() {
        return Err(InductionError::EmptyInput);
    }
    let mut sampled: Vec<&TaskInstance> = inputs.iter().collect();
    sampled.sort_by(|a, b| a.id.cmp(&b.id));
    if sampled.len() > config.abs_sample_cap {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "abs-sample", ""));
        sampled.shuffle(&mut rng);
        sampled.truncate(config.abs_sample_cap);
        sampled.sort_by(|a, b| a.id.cmp(&b.id));
    }
    let mut prompt = format!(
        "TASK: summarize-family\nMEMBERS: {}\n\nDescribe the shared task family; do not describe any single instance.\n",
        sampled.len()
    );
    for x in &sampled {
        prompt.push_str(&format!("\nINSTANCE {}\n{}\n", x.id, x.payload));
    }
    Ok(prompt)
}

pub fn summarize_task(
    ctx: &InductionContext,
    inputs: &[TaskInstance],
) -> Result<String, InductionError> {
    let prompt = family_prompt(&ctx.config, inputs)?;
    aux_call(ctx, "summarize-family", prompt)
}

/// The per-rollout summary prompt. Pure: usable for prompt preview without a
/// provider.
pub fn rollout_summary_prompt(x: &TaskInstance, tau: &Trajectory, polarity: Polarity) -> String {
    let ask = match polarity {
        Polarity::Failure => "Write a root-cause summary of why this rollout failed.",
        Polarity::Success => "Write a summary of the strategy that made this rollout succeed.",
    };
    format!(
        "TASK: summarize-rollout\nINSTANCE {}\nPOLARITY: {}\n{ask}\nPAYLOAD: {}\nTRAJECTORY:\n{}",
        x.id,
        polarity.as_str(),
        x.payload,
        render_trajectory(tau),
    )
}

fn summarize_one_rollout(
    ctx: &InductionContext,
    x: &TaskInstance,
    tau: &Trajectory,
    polarity: Polarity,
) -> Result<RolloutSummary, InductionError> {
    let prompt = rollout_summary_prompt(x, tau, polarity);
    let text = aux_call(ctx, "summarize-rollout", prompt)?;
    let embedding = ctx.embedder.embed(x, &text)?;
    Ok(RolloutSummary {
        instance_id: x.id.clone(),
        polarity,
        text,
        embedding,
    })
}

/// Summarizes and embeds every baseline rollout, failures first, each stratum
/// ordered by instance id. Parallel up to the configured worker count.
pub fn summarize_rollouts(
    ctx: &InductionContext,
    instances: &[TaskInstance],
    baseline: &BaselineSet,
) -> Result<Vec<RolloutSummary>, InductionError> {
    let by_id: BTreeMap<&str, &TaskInstance> =
        instances.iter().map(|x| (x.id.as_str(), x)).collect();
    let mut jobs: Vec<(&TaskInstance, &Trajectory, Polarity)> = Vec::new();
    for (ids, polarity) in [
        (&baseline.failures, Polarity::Failure),
        (&baseline.successes, Polarity::Success),
    ] {
        for id in ids {
            let x = by_id
                .get(id.as_str())
                .ok_or_else(|| InductionError::MissingBaseline { id: id.clone() })?;
            let rec = baseline
                .records
                .get(id)
                .ok_or_else(|| InductionError::MissingBaseline { id: id.clone() })?;
            jobs.push((x, &rec.trajectory, polarity));
        }
    }
    if ctx.config.workers > 1 {
        scoped_pool(ctx.config.workers).install(|| {
            jobs.par_iter()
                .map(|(x, tau, p)| summarize_one_rollout(ctx, x, tau, *p))
                .collect()
        })
    } else {
        jobs.iter()
            .map(|(x, tau, p)| summarize_one_rollout(ctx, x, tau, *p))
            .collect()
    }
}

/// One auxiliary call synthesizing a cluster of same-polarity rollouts,
/// showing at most `summ_triple_cap` member triples (lowest ids first).
pub fn summarize_cluster(
    ctx: &InductionContext,
    members: &[(&TaskInstance, &Trajectory, &str)],
    polarity: Polarity,
) -> Result<ClusterSummary, InductionError> {
    assert!(!members.is_empty(), "clusters are non-empty");
    let mut member_ids: Vec<String> = members.iter().map(|(x, _, _)| x.id.clone()).collect();
    member_ids.sort();
    let ask = match polarity {
        Polarity::Failure => {
            "State the shared root cause, the typical failure point, and a corrective rule."
        }
        Polarity::Success => {
            "State the reusable procedure, the conditions where it applies, and robustness checks."
        }
    };
    let mut prompt = format!(
        "TASK: summarize-cluster\nPOLARITY: {}\nMEMBERS: {}\n{ask}\n",
        polarity.as_str(),
        members.len()
    );
    let mut shown: Vec<&(&TaskInstance, &Trajectory, &str)> = members.iter().collect();
    shown.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    shown.truncate(ctx.config.summ_triple_cap);
    for (x, tau, rho) in shown {
        prompt.push_str(&format!(
            "\nINSTANCE {}\n{}\nSUMMARY: {rho}\nTRAJECTORY:\n{}\n",
            x.id,
            x.payload,
            render_trajectory(tau),
        ));
    }
    let text = aux_call(ctx, "summarize-cluster", prompt)?;
    Ok(ClusterSummary {
        polarity,
        member_ids,
        text,
    })
}

/// Clusters one polarity's rollout summaries and summarizes each cluster.
/// Cluster count adapts to the stratum size; at most `max_clusters` clusters
/// are kept (largest first, ties to the lowest member id), and the surviving
/// clusters are ordered by their lowest member id.
fn cluster_stratum(
    ctx: &InductionContext,
    instances: &[TaskInstance],
    baseline: &BaselineSet,
    summaries: &[RolloutSummary],
    polarity: Polarity,
) -> Result<Vec<ClusterSummary>, InductionError> {
    let stratum: Vec<&RolloutSummary> = summaries
        .iter()
        .filter(|s| s.polarity == polarity)
        .collect();
    if stratum.is_empty() {
        return Ok(Vec::new());
    }
    let k = choose_k(
        stratum.len(),
        ctx.config.target_cluster_size,
        ctx.config.kmin,
        ctx.config.kmax,
    );
    let points: Vec<Embedding> = stratum.iter().map(|s| s.embedding.clone()).collect();
    let seed = derive_seed(ctx.config.seed, "cluster", polarity.as_str());
    let fit = kmeans(&points, k, seed);

    let mut groups: Vec<Vec<usize>> = fit.members();
    // Selection cap: keep the largest clusters; break size ties toward the
    // cluster containing the lowest instance id.
    groups.sort_by(|a, b| {
        b.len().cmp(&a.len()).then_with(|| {
            let amin = a.iter().map(|&i| &stratum[i].instance_id).min();
            let bmin = b.iter().map(|&i| &stratum[i].instance_id).min();
            amin.cmp(&bmin)
        })
    });
    groups.truncate(ctx.config.max_clusters);
    // Canonical output order: by lowest member id.
    groups.sort_by_key(|g| {
        g.iter()
            .map(|&i| stratum[i].instance_id.clone())
            .min()
            .expect("clusters are non-empty")
    });

    let by_id: BTreeMap<&str, &TaskInstance> =
        instances.iter().map(|x| (x.id.as_str(), x)).collect();
    let jobs: Vec<Vec<(&TaskInstance, &Trajectory, &str)>> = groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&i| {
                    let s = stratum[i];
                    let x = by_id[s.instance_id.as_str()];
                    let tau = &baseline.records[&s.instance_id].trajectory;
                    (x, tau, s.text.as_str())
                })
                .collect()
        })
        .collect();
    if ctx.config.workers > 1 {
        scoped_pool(ctx.config.workers).install(|| {
            jobs.par_iter()
                .map(|members| summarize_cluster(ctx, members, polarity))
                .collect()
        })
    } else {
        jobs.iter()
            .map(|members| summarize_cluster(ctx, members, polarity))
            .collect()
    }
}

/// For each failure, selects its nearest success by cosine distance over the
/// summary embeddings (distance ties broken toward the lexicographically
/// smallest success id), then keeps the `cap` closest pairs overall (ties
/// toward the smallest failure id).
pub fn nearest_success_pairs<'a>(
    failures: &[&'a RolloutSummary],
    successes: &[&'a RolloutSummary],
    cap: usize,
) -> Vec<(&'a RolloutSummary, &'a RolloutSummary, f64)> {
    let mut pairs: Vec<(&RolloutSummary, &RolloutSummary, f64)> = Vec::new();
    for f in failures {
        let mut best: Option<(&RolloutSummary, f64)> = None;
        for s in successes {
            let d = cosine_distance(&f.embedding, &s.embedding);
            let better = match best {
                None => true,
                Some((bs, bd)) => d < bd || (d == bd && s.instance_id < bs.instance_id),
            };
            if better {
                best = Some((s, d));
            }
        }
        if let Some((s, d)) = best {
            pairs.push((f, s, d));
        }
    }
    pairs.sort_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .expect("distances are finite")
            .then_with(|| a.0.instance_id.cmp(&b.0.instance_id))
    });
    pairs.truncate(cap);
    pairs
}

/// Pairs each failure with its nearest success in embedding space, keeps the
/// `cap` closest pairs, screens each with the same-task check, and writes a
/// contrastive observation for every pair that passes. Returns the surviving
/// observations plus an audit entry for every screened pair.
pub fn pair_contrasts(
    ctx: &InductionContext,
    instances: &[TaskInstance],
    baseline: &BaselineSet,
    summaries: &[RolloutSummary],
) -> Result<(Vec<ContrastObservation>, Vec<ContrastAuditEntry>), InductionError> {
    let failures: Vec<&RolloutSummary> = summaries
        .iter()
        .filter(|s| s.polarity == Polarity::Failure)
        .collect();
    let successes: Vec<&RolloutSummary> = summaries
        .iter()
        .filter(|s| s.polarity == Polarity::Success)
        .collect();
    if successes.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }

    let candidates = nearest_success_pairs(&failures, &successes, ctx.config.contrast_cap);

    let by_id: BTreeMap<&str, &TaskInstance> =
        instances.iter().map(|x| (x.id.as_str(), x)).collect();
    let mut contrasts = Vec::new();
    let mut audit = Vec::new();
    for (f, s, d) in candidates {
        let xf = by_id[f.instance_id.as_str()];
        let xs = by_id[s.instance_id.as_str()];
        let tag = |x: &TaskInstance| x.task_tag.clone().unwrap_or_else(|| "-".to_string());
        let same_task_prompt = format!(
            "TASK: same-task\nPAIR: {fid} {sid}\nTAG A: {ta}\nTAG B: {tb}\nAnswer YES or NO: are these two instances of the same task type?\n\nINSTANCE {fid}\n{fp}\n\nINSTANCE {sid}\n{sp}",
            fid = xf.id,
            sid = xs.id,
            ta = tag(xf),
            tb = tag(xs),
            fp = xf.payload,
            sp = xs.payload,
        );
        let verdict = aux_call(ctx, "same-task", same_task_prompt)?;
        let same_task = verdict.trim().eq_ignore_ascii_case("yes");
        audit.push(ContrastAuditEntry {
            failure_id: xf.id.clone(),
            success_id: xs.id.clone(),
            distance: d,
            same_task,
        });
        if !same_task {
            continue;
        }
        let tau_f = &baseline.records[&f.instance_id].trajectory;
        let tau_s = &baseline.records[&s.instance_id].trajectory;
        let contrast_prompt = format!(
            "TASK: contrast\nPAIR: {fid} {sid}\nDescribe the behavior present in the success and omitted in the failure.\n\nFAILURE INSTANCE {fid}\n{fp}\nTRAJECTORY:\n{ft}\n\nSUCCESS INSTANCE {sid}\n{sp}\nTRAJECTORY:\n{st}",
            fid = xf.id,
            sid = xs.id,
            fp = xf.payload,
            ft = render_trajectory(tau_f),
            sp = xs.payload,
            st = render_trajectory(tau_s),
        );
        let text = aux_call(ctx, "contrast", contrast_prompt)?;
        contrasts.push(ContrastObservation {
            failure_id: xf.id.clone(),
            success_id: xs.id.clone(),
            text,
            same_task: true,
        });
    }
    Ok((contrasts, audit))
}

/// Everything compress produces: the diagnostic summary plus the raw
/// per-rollout summaries and pairing audit, kept for export and audit trails.
#[derive(Clone, Debug)]
pub struct CompressOutput {
    pub summary: DiagnosticSummary,
    pub rollout_summaries: Vec<RolloutSummary>,
    pub contrast_audit: Vec<ContrastAuditEntry>,
}

/// Runs the full induction stage over a baseline set.
pub fn compress(
    ctx: &InductionContext,
    instances: &[TaskInstance],
    baseline: &BaselineSet,
) -> Result<CompressOutput, InductionError> {
    if baseline.is_empty() {
        return Err(InductionError::EmptyInput);
    }
    let a0 = summarize_task(ctx, instances)?;
    let rollout_summaries = summarize_rollouts(ctx, instances, baseline)?;
    let failures = cluster_stratum(ctx, instances, baseline, &rollout_summaries, Polarity::Failure)?;
    let successes = cluster_stratum(ctx, instances, baseline, &rollout_summaries, Polarity::Success)?;
    let (contrasts, contrast_audit) = pair_contrasts(ctx, instances, baseline, &rollout_summaries)?;
    Ok(CompressOutput {
        summary: DiagnosticSummary {
            a0,
            failures,
            successes,
            contrasts,
        },
        rollout_summaries,
        contrast_audit,
    })
}

/// Exports embeddings for external visualization: one row per summary with
/// columns `id, polarity, e0..e{d-1}`.
pub fn write_embeddings_csv(
    path: &Path,
    summaries: &[RolloutSummary],
) -> Result<(), InductionError> {
    let mut writer = csv::Writer::from_path(path)?;
    let dim = summaries.first().map(|s| s.embedding.len()).unwrap_or(0);
    let mut header = vec!["id".to_string(), "polarity".to_string()];
    header.extend((0..dim).map(|i| format!("e{i}")));
    writer.write_record(&header)?;
    for s in summaries {
        let mut row = vec![s.instance_id.clone(), s.polarity.as_str().to_string()];
        row.extend(s.embedding.iter().map(|v| format!("{v}")));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{
        AgentRole, ChatProvider, RequestDefaults, ScriptedAgentBehavior, ScriptedAuxBehavior,
        ScriptedProvider,
    };
    use crate::induction::HashEmbedder;
    use crate::model::{EvaluatorKind, EvaluatorSpec};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    fn defaults() -> RequestDefaults {
        RequestDefaults {
            model: "scripted".into(),
            temperature: 0.0,
            max_tokens: 4096,
        }
    }

    fn exact_match_for(agent: &ScriptedAgentBehavior, ids: &[&str]) -> Evaluator {
        let expected = ids
            .iter()
            .map(|id| (id.to_string(), agent.correct_answer(id)))
            .collect();
        Evaluator::new(EvaluatorSpec {
            kind: EvaluatorKind::ExactMatch {
                expected,
                default_expected: None,
            },
            rng_seed: 7,
        })
    }

    /// Hub with a counting base agent and a default aux double.
    fn scripted_hub(agent: ScriptedAgentBehavior) -> (ProviderHub, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let counter = calls.clone();
        let mut hub = ProviderHub::in_memory();
        hub.register(
            "base",
            AgentRole::ScriptedDouble,
            defaults(),
            Arc::new(ScriptedProvider::new(move |req: &ChatRequest| {
                counter.fetch_add(1, Ordering::SeqCst);
                agent.complete(req)
            })),
        );
        hub.register(
            "aux",
            AgentRole::InductionAux,
            defaults(),
            Arc::new(ScriptedAuxBehavior::default()),
        );
        (hub, calls)
    }

    fn instances(n: usize) -> Vec<TaskInstance> {
        (1..=n)
            .map(|i| TaskInstance::new(format!("t{i:03}"), format!("payload number {i}")))
            .collect()
    }

    #[test]
    fn strata_follow_outcomes() {
        let agent = ScriptedAgentBehavior::new(["t002".to_string()]);
        let evaluator = exact_match_for(&agent, &["t001", "t002", "t003"]);
        let (hub, _) = scripted_hub(agent);
        let dir = tempfile::tempdir().unwrap();
        let mut store = TrajectoryStore::open(dir.path().join("rollouts.jsonl")).unwrap();
        let xs = instances(3);
        let opts = RolloutOptions::new("solve the task");
        let baseline =
            elicit_baseline(&hub, "base", &xs, &evaluator, &mut store, &opts, 1, 42, "elicit", "elicit")
                .unwrap();
        assert_eq!(baseline.failures, vec!["t001", "t003"]);
        assert_eq!(baseline.successes, vec!["t002"]);
    }

    #[test]
    fn all_failures_leave_success_stratum_empty() {
        let agent = ScriptedAgentBehavior::new([]);
        let evaluator = exact_match_for(&agent, &["t001", "t002", "t003", "t004"]);
        let (hub, _) = scripted_hub(agent);
        let dir = tempfile::tempdir().unwrap();
        let mut store = TrajectoryStore::open(dir.path().join("rollouts.jsonl")).unwrap();
        let xs = instances(4);
        let opts = RolloutOptions::new("solve");
        let baseline =
            elicit_baseline(&hub, "base", &xs, &evaluator, &mut store, &opts, 2, 42, "elicit", "elicit")
                .unwrap();
        assert!(baseline.successes.is_empty());
        assert_eq!(baseline.failures.len(), 4);
    }

    #[test]
    fn rerun_hits_the_store_and_makes_no_provider_calls() {
        let agent = ScriptedAgentBehavior::new(["t001".to_string()]);
        let evaluator = exact_match_for(&agent, &["t001", "t002"]);
        let (hub, calls) = scripted_hub(agent.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rollouts.jsonl");
        let xs = instances(2);
        let opts = RolloutOptions::new("solve");

        let mut store = TrajectoryStore::open(&path).unwrap();
        let first =
            elicit_baseline(&hub, "base", &xs, &evaluator, &mut store, &opts, 1, 42, "elicit", "elicit")
                .unwrap();
        let after_first = calls.load(Ordering::SeqCst);
        assert_eq!(after_first, 2);

        // Same hub, same store: replay end to end.
        let second =
            elicit_baseline(&hub, "base", &xs, &evaluator, &mut store, &opts, 1, 42, "elicit", "elicit")
                .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), after_first);
        assert_eq!(first.failures, second.failures);
        assert_eq!(first.successes, second.successes);

        // Fresh hub, reopened store: still no provider traffic.
        let (hub2, calls2) = scripted_hub(agent);
        let mut store2 = TrajectoryStore::open(&path).unwrap();
        let third =
            elicit_baseline(&hub2, "base", &xs, &evaluator, &mut store2, &opts, 1, 42, "elicit", "elicit")
                .unwrap();
        assert_eq!(calls2.load(Ordering::SeqCst), 0);
        assert_eq!(first.successes, third.successes);
    }

    #[test]
    fn provider_errors_become_diagnosed_failures() {
        let mut hub = ProviderHub::in_memory();
        hub.register(
            "base",
            AgentRole::ScriptedDouble,
            defaults(),
            Arc::new(ScriptedProvider::new(|req: &ChatRequest| {
                let user = req
                    .messages
                    .iter()
                    .find(|m| m.role == "user")
                    .map(|m| m.content.clone())
                    .unwrap_or_default();
                if user.contains("t002") {
                    Err(crate::gateway::ProviderError::Protocol {
                        reason: "bad request".into(),
                    })
                } else {
                    Ok(crate::gateway::ChatResponse::text("ANSWER t001", req))
                }
            })),
        );
        let evaluator = Evaluator::new(EvaluatorSpec {
            kind: EvaluatorKind::ExactMatch {
                expected: [
                    ("t001".to_string(), "ANSWER t001".to_string()),
                    ("t002".to_string(), "ANSWER t002".to_string()),
                ]
                .into_iter()
                .collect(),
                default_expected: None,
            },
            rng_seed: 7,
        });
        let dir = tempfile::tempdir().unwrap();
        let mut store = TrajectoryStore::open(dir.path().join("rollouts.jsonl")).unwrap();
        let xs = instances(2);
        let opts = RolloutOptions::new("solve");
        let baseline =
            elicit_baseline(&hub, "base", &xs, &evaluator, &mut store, &opts, 1, 42, "elicit", "elicit")
                .unwrap();
        assert_eq!(baseline.successes, vec!["t001"]);
        assert_eq!(baseline.failures, vec!["t002"]);
        let rec = &baseline.records["t002"];
        assert!(rec.outcome.diagnostic.as_deref().unwrap().contains("rollout error"));
    }

    /// Registers an aux agent whose requests are captured for inspection.
    fn capturing_aux_hub() -> (ProviderHub, Arc<Mutex<Vec<ChatRequest>>>) {
        let seen: Arc<Mutex<Vec<ChatRequest>>> = Arc::new(Mutex::new(Vec::new()));
        let sink = seen.clone();
        let mut hub = ProviderHub::in_memory();
        let behavior = ScriptedAuxBehavior::default();
        hub.register(
            "aux",
            AgentRole::InductionAux,
            defaults(),
            Arc::new(ScriptedProvider::new(move |req: &ChatRequest| {
                sink.lock().unwrap().push(req.clone());
                behavior.complete(req)
            })),
        );
        hub
            .register(
                "base",
                AgentRole::ScriptedDouble,
                defaults(),
                Arc::new(ScriptedProvider::new(|req: &ChatRequest| {
                    Ok(crate::gateway::ChatResponse::text("FAIL", req))
                })),
            );
        (hub, seen)
    }

    #[test]
    fn family_summary_samples_at_most_the_cap() {
        let (hub, seen) = capturing_aux_hub();
        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let xs = instances(1000);
        let a0 = summarize_task(&ctx, &xs).unwrap();
        assert_eq!(a0, "synthetic task family");
        let reqs = seen.lock().unwrap();
        let prompt = &reqs[0].messages[1].content;
        let shown = prompt.lines().filter(|l| l.starts_with("INSTANCE ")).count();
        assert_eq!(shown, 20);
        assert!(prompt.starts_with("TASK: summarize-family\nMEMBERS: 20\n"));
    }

    #[test]
    fn family_summary_requires_input() {
        let (hub, _) = capturing_aux_hub();
        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        assert!(matches!(
            summarize_task(&ctx, &[]).unwrap_err(),
            InductionError::EmptyInput
        ));
    }

    fn trivial_trajectory(id: &str, text: &str) -> Trajectory {
        Trajectory {
            instance_id: id.to_string(),
            steps: vec![TrajectoryStep::AgentMessage {
                index: 0,
                content: text.to_string(),
            }],
            final_output: Some(text.to_string()),
            token_usage: Default::default(),
        }
    }

    #[test]
    fn cluster_prompt_shows_at_most_ten_triples_and_full_count() {
        let (hub, seen) = capturing_aux_hub();
        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let xs = instances(40);
        let taus: Vec<Trajectory> = xs
            .iter()
            .map(|x| trivial_trajectory(&x.id, "FAIL"))
            .collect();
        let members: Vec<(&TaskInstance, &Trajectory, &str)> = xs
            .iter()
            .zip(&taus)
            .map(|(x, t)| (x, t, "root cause"))
            .collect();
        let summary = summarize_cluster(&ctx, &members, Polarity::Failure).unwrap();
        assert_eq!(summary.member_ids.len(), 40);
        assert!(summary.text.contains("|P|=40"));
        let reqs = seen.lock().unwrap();
        let prompt = &reqs[0].messages[1].content;
        assert_eq!(
            prompt.lines().filter(|l| l.starts_with("INSTANCE ")).count(),
            10
        );
    }

    /// Builds a baseline + summaries directly, with hand-placed embeddings.
    fn synthetic_summaries(
        spec: &[(&str, Polarity, Vec<f64>)],
    ) -> (Vec<TaskInstance>, BaselineSet, Vec<RolloutSummary>) {
        let xs: Vec<TaskInstance> = spec
            .iter()
            .map(|(id, _, _)| TaskInstance::new(*id, format!("payload {id}")))
            .collect();
        let records: Vec<RolloutRecord> = spec
            .iter()
            .map(|(id, p, _)| RolloutRecord {
                instance_id: id.to_string(),
                trajectory: trivial_trajectory(id, "out"),
                outcome: OutcomeRecord {
                    instance_id: id.to_string(),
                    success_prob: if *p == Polarity::Success { 1.0 } else { 0.0 },
                    outcome: *p == Polarity::Success,
                    sampled: false,
                    diagnostic: None,
                },
            })
            .collect();
        let summaries: Vec<RolloutSummary> = spec
            .iter()
            .map(|(id, p, e)| RolloutSummary {
                instance_id: id.to_string(),
                polarity: *p,
                text: format!("summary {id}"),
                embedding: e.clone(),
            })
            .collect();
        (xs, BaselineSet::from_records(records), summaries)
    }

    #[test]
    fn nearest_success_wins_by_cosine_distance() {
        let (hub, _) = capturing_aux_hub();
        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let (xs, baseline, summaries) = synthetic_summaries(&[
            ("f1", Polarity::Failure, vec![1.0, 0.0]),
            ("s1", Polarity::Success, vec![0.9, 0.1]),
            ("s2", Polarity::Success, vec![-1.0, 0.0]),
        ]);
        let (contrasts, audit) = pair_contrasts(&ctx, &xs, &baseline, &summaries).unwrap();
        assert_eq!(contrasts.len(), 1);
        assert_eq!(contrasts[0].failure_id, "f1");
        assert_eq!(contrasts[0].success_id, "s1");
        assert!(contrasts[0].same_task);
        assert!((audit[0].distance - 0.006_116_2).abs() < 1e-6);
    }

    #[test]
    fn empty_success_stratum_yields_no_contrasts() {
        let (hub, _) = capturing_aux_hub();
        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let (xs, baseline, summaries) = synthetic_summaries(&[
            ("f1", Polarity::Failure, vec![1.0, 0.0]),
            ("f2", Polarity::Failure, vec![0.0, 1.0]),
        ]);
        let (contrasts, audit) = pair_contrasts(&ctx, &xs, &baseline, &summaries).unwrap();
        assert!(contrasts.is_empty());
        assert!(audit.is_empty());
    }

    #[test]
    fn pair_cap_keeps_smallest_distances_sorted() {
        let (hub, _) = capturing_aux_hub();
        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        // Failures fan out from the lone success at increasing angles.
        let mut spec: Vec<(String, Polarity, Vec<f64>)> = vec![(
            "s01".to_string(),
            Polarity::Success,
            vec![1.0, 0.0],
        )];
        for i in 1..=25 {
            let theta = 0.05 * i as f64;
            spec.push((
                format!("f{i:02}"),
                Polarity::Failure,
                vec![theta.cos(), theta.sin()],
            ));
        }
        let borrowed: Vec<(&str, Polarity, Vec<f64>)> = spec
            .iter()
            .map(|(id, p, e)| (id.as_str(), *p, e.clone()))
            .collect();
        let (xs, baseline, summaries) = synthetic_summaries(&borrowed);
        let (contrasts, audit) = pair_contrasts(&ctx, &xs, &baseline, &summaries).unwrap();
        assert_eq!(audit.len(), 20);
        assert_eq!(contrasts.len(), 20);
        let kept: Vec<&str> = contrasts.iter().map(|c| c.failure_id.as_str()).collect();
        let expected: Vec<String> = (1..=20).map(|i| format!("f{i:02}")).collect();
        assert_eq!(kept, expected.iter().map(|s| s.as_str()).collect::<Vec<_>>());
        for pair in audit.windows(2) {
            assert!(pair[0].distance <= pair[1].distance);
        }
    }

    #[test]
    fn same_task_rejection_drops_the_pair_but_keeps_the_audit() {
        let (hub, _) = capturing_aux_hub();
        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let (mut xs, baseline, summaries) = synthetic_summaries(&[
            ("f1", Polarity::Failure, vec![1.0, 0.0]),
            ("s1", Polarity::Success, vec![0.9, 0.1]),
        ]);
        xs[0].task_tag = Some("unit-conversion".to_string());
        xs[1].task_tag = Some("sorting".to_string());
        let (contrasts, audit) = pair_contrasts(&ctx, &xs, &baseline, &summaries).unwrap();
        assert!(contrasts.is_empty());
        assert_eq!(audit.len(), 1);
        assert!(!audit[0].same_task);
    }

    /// End-to-end compress over a scripted run: 65 failures / 35 successes.
    #[test]
    fn compress_shapes_follow_adaptive_k() {
        let mut success_ids = Vec::new();
        let mut xs = Vec::new();
        for i in 1..=100u32 {
            let id = format!("t{i:03}");
            // Payload words steer the hashing embedder into distinct regions.
            let payload = format!("group{} problem statement {id}", i % 10);
            if i <= 35 {
                success_ids.push(id.clone());
            }
            xs.push(TaskInstance::new(id, payload));
        }
        let agent = ScriptedAgentBehavior::new(success_ids);
        let ids: Vec<&str> = xs.iter().map(|x| x.id.as_str()).collect();
        let evaluator = exact_match_for(&agent, &ids);
        let (hub, _) = scripted_hub(agent);
        let dir = tempfile::tempdir().unwrap();
        let mut store = TrajectoryStore::open(dir.path().join("rollouts.jsonl")).unwrap();
        let opts = RolloutOptions::new("solve");
        let baseline =
            elicit_baseline(&hub, "base", &xs, &evaluator, &mut store, &opts, 4, 42, "elicit", "elicit")
                .unwrap();
        assert_eq!(baseline.failures.len(), 65);
        assert_eq!(baseline.successes.len(), 35);

        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let out = compress(&ctx, &xs, &baseline).unwrap();
        assert_eq!(out.summary.failures.len(), 4, "choose_k(65, 15) = 4");
        assert_eq!(out.summary.successes.len(), 2, "choose_k(35, 15) = 2");
        assert_eq!(out.summary.contrasts.len(), 20);
        assert_eq!(out.summary.a0, "synthetic task family");

        // Every id lands in exactly one cluster of its polarity.
        for (ids, clusters) in [
            (&baseline.failures, &out.summary.failures),
            (&baseline.successes, &out.summary.successes),
        ] {
            let mut seen: Vec<&String> = clusters.iter().flat_map(|c| &c.member_ids).collect();
            seen.sort();
            let expect: Vec<&String> = ids.iter().collect();
            assert_eq!(seen, expect);
        }

        // Deterministic content hash across a replayed run.
        let (hub2, calls2) = scripted_hub(ScriptedAgentBehavior::new(
            (1..=35u32).map(|i| format!("t{i:03}")),
        ));
        let mut store2 = TrajectoryStore::open(dir.path().join("rollouts.jsonl")).unwrap();
        let baseline2 =
            elicit_baseline(&hub2, "base", &xs, &evaluator, &mut store2, &opts, 4, 42, "elicit", "elicit")
                .unwrap();
        assert_eq!(calls2.load(Ordering::SeqCst), 0);
        let ctx2 = InductionContext {
            hub: &hub2,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let out2 = compress(&ctx2, &xs, &baseline2).unwrap();
        assert_eq!(out.summary.content_hash(), out2.summary.content_hash());
    }

    #[test]
    fn single_polarity_baselines_compress_cleanly() {
        let xs = instances(6);
        let ids: Vec<&str> = xs.iter().map(|x| x.id.as_str()).collect();

        // All successes: no failure clusters, no contrasts.
        let agent = ScriptedAgentBehavior::new(ids.iter().map(|s| s.to_string()));
        let evaluator = exact_match_for(&agent, &ids);
        let (hub, _) = scripted_hub(agent);
        let dir = tempfile::tempdir().unwrap();
        let mut store = TrajectoryStore::open(dir.path().join("rollouts.jsonl")).unwrap();
        let opts = RolloutOptions::new("solve");
        let baseline =
            elicit_baseline(&hub, "base", &xs, &evaluator, &mut store, &opts, 1, 42, "elicit", "elicit")
                .unwrap();
        let cfg = InductionConfig::default();
        let embedder = HashEmbedder::default();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let out = compress(&ctx, &xs, &baseline).unwrap();
        assert!(out.summary.failures.is_empty());
        assert!(out.summary.contrasts.is_empty());
        assert!(!out.summary.successes.is_empty());

        // All failures: no success clusters, no contrasts.
        let agent = ScriptedAgentBehavior::new([]);
        let evaluator = exact_match_for(&agent, &ids);
        let (hub, _) = scripted_hub(agent);
        let mut store = TrajectoryStore::open(dir.path().join("rollouts2.jsonl")).unwrap();
        let baseline =
            elicit_baseline(&hub, "base", &xs, &evaluator, &mut store, &opts, 1, 42, "elicit", "elicit")
                .unwrap();
        let ctx = InductionContext {
            hub: &hub,
            aux_agent: "aux",
            embedder: &embedder,
            config: &cfg,
        };
        let out = compress(&ctx, &xs, &baseline).unwrap();
        assert!(out.summary.successes.is_empty());
        assert!(out.summary.contrasts.is_empty());
        assert!(!out.summary.failures.is_empty());
    }

    #[test]
    fn embeddings_export_has_id_polarity_and_vector_columns() {
        let (_, _, summaries) = synthetic_summaries(&[
            ("a", Polarity::Failure, vec![1.0, 0.0]),
            ("b", Polarity::Success, vec![0.0, 1.0]),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.csv");
        write_embeddings_csv(&path, &summaries).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("id,polarity,e0,e1"));
        assert_eq!(lines.next(), Some("a,failure,1,0"));
        assert_eq!(lines.next(), Some("b,success,0,1"));
    }

    #[test]
    fn brute_force_nearest_neighbor_agrees() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let nf = rng.gen_range(1..6);
            let ns = rng.gen_range(1..6);
            let dim = 4;
            let mut spec: Vec<(String, Polarity, Vec<f64>)> = Vec::new();
            for i in 0..nf {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                spec.push((format!("f{i}"), Polarity::Failure, v));
            }
            for j in 0..ns {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                spec.push((format!("s{j}"), Polarity::Success, v));
            }
            let borrowed: Vec<(&str, Polarity, Vec<f64>)> = spec
                .iter()
                .map(|(id, p, e)| (id.as_str(), *p, e.clone()))
                .collect();
            let (hub, _) = capturing_aux_hub();
            let cfg = InductionConfig::default();
            let embedder = HashEmbedder::default();
            let ctx = InductionContext {
                hub: &hub,
                aux_agent: "aux",
                embedder: &embedder,
                config: &cfg,
            };
            let (xs, baseline, summaries) = synthetic_summaries(&borrowed);
            let (_, audit) = pair_contrasts(&ctx, &xs, &baseline, &summaries).unwrap();
            // Oracle: exhaustive scan per failure, then sort + cap.
            let fails: Vec<&RolloutSummary> = summaries
                .iter()
                .filter(|s| s.polarity == Polarity::Failure)
                .collect();
            let succs: Vec<&RolloutSummary> = summaries
                .iter()
                .filter(|s| s.polarity == Polarity::Success)
                .collect();
            let mut expect: Vec<(String, String, f64)> = fails
                .iter()
                .map(|f| {
                    let mut best: Option<(&RolloutSummary, f64)> = None;
                    for s in &succs {
                        let d = cosine_distance(&f.embedding, &s.embedding);
                        let better = match best {
                            None => true,
                            Some((bs, bd)) => {
                                d < bd || (d == bd && s.instance_id < bs.instance_id)
                            }
                        };
                        if better {
                            best = Some((s, d));
                        }
                    }
                    let (s, d) = best.unwrap();
                    (f.instance_id.clone(), s.instance_id.clone(), d)
                })
                .collect();
            expect.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.cmp(&b.0)));
            expect.truncate(cfg.contrast_cap);
            let got: Vec<(String, String, f64)> = audit
                .iter()
                .map(|e| (e.failure_id.clone(), e.success_id.clone(), e.distance))
                .collect();
            assert_eq!(got, expect);
        }
    }
}
