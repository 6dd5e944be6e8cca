//! Round feedback assembly: a handful of per-instance explanation calls over
//! the repaired, regressed, and still-failing buckets, condensed by one
//! aggregation call into the four-field bundle the next refinement consumes.
//! Raw trajectories stop here; only the bundle reaches the generation prompt.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::gateway::{ChatMessage, ChatRequest, ProviderHub};
use crate::induction::{render_trajectory, scoped_pool, BaselineSet};
use crate::model::{TaskInstance, Trajectory};
use crate::stats::partition_feedback;

use super::verify::CandidateVerification;
use super::{FeedbackBundle, PipelineContext, PipelineError};

const FEEDBACK_STAGE: &str = "feedback";

const EXPLAIN_INSTRUCTIONS: &str = "Explain in at most two sentences why the skill-injected rollout below ended as it did relative to the cached no-skill baseline.";

const AGGREGATE_INSTRUCTIONS: &str = "Condense the outcome notes below into exactly four lines: 'KEEP: <what the skill should keep>', 'REMOVE: <what it should drop>', 'ADD: <what it is missing>', 'EMPHASIZE: <what it must stress>'. Leave a field empty if the notes do not support it.";

/// One sampled instance put in front of the explanation model.
struct Exhibit<'a> {
    bucket: &'static str,
    x: &'a TaskInstance,
    baseline: &'a Trajectory,
    skill: &'a Trajectory,
}

fn aux_request(hub: &ProviderHub, aux_agent: &str, prompt: String) -> ChatRequest {
    let defaults = hub
        .defaults(aux_agent)
        .expect("auxiliary agent is registered")
        .clone();
    ChatRequest {
        model: defaults.model,
        messages: vec![
            ChatMessage::system(
                "You analyze agent rollouts and reply exactly in the requested format.",
            ),
            ChatMessage::user(prompt),
        ],
        tools: None,
        temperature: defaults.temperature,
        max_tokens: defaults.max_tokens,
        seed: None,
    }
}

fn explain_prompt(round: u32, exhibit: &Exhibit) -> String {
    format!(
        "TASK: explain-outcome\nROUND: {round}\nBUCKET: {}\nINSTANCE {}\n{EXPLAIN_INSTRUCTIONS}\n\nPAYLOAD:\n{}\n\nBASELINE TRAJECTORY:\n{}\nSKILL TRAJECTORY:\n{}",
        exhibit.bucket,
        exhibit.x.id,
        exhibit.x.payload,
        render_trajectory(exhibit.baseline),
        render_trajectory(exhibit.skill),
    )
}

fn aggregate_prompt(round: u32, evidence: &[String], notes: &[(String, &'static str, String)]) -> String {
    let mut out = format!(
        "TASK: aggregate-feedback\nROUND: {round}\nEVIDENCE: {}\n{AGGREGATE_INSTRUCTIONS}\n",
        evidence.join(",")
    );
    for (id, bucket, note) in notes {
        out.push_str(&format!("\n{} {id}: {note}\n", bucket.to_uppercase()));
    }
    out
}

fn line_after(text: &str, prefix: &str) -> Option<String> {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .map(|r| r.trim().to_string())
}

fn field(reply: &str, prefix: &str, round: u32) -> String {
    match line_after(reply, prefix) {
        Some(value) => value,
        None => {
            log::warn!("round {round}: aggregation reply lacks a {prefix:?} line; treating as empty");
            String::new()
        }
    }
}

/// Builds the feedback bundle for one verified round. Samples up to
/// `feedback_sample_cap` lowest-id instances from each of repair / regress /
/// fail, explains each sampled instance with one auxiliary call (parallel up
/// to the feedback worker count), then condenses the notes with a single
/// aggregation call. Empty partitions short-circuit to an all-empty bundle
/// with zero calls.
pub fn build_feedback(
    ctx: &PipelineContext,
    round: u32,
    verification: &CandidateVerification,
    instances_by_id: &BTreeMap<String, &TaskInstance>,
    ver_baseline: &BaselineSet,
) -> Result<FeedbackBundle, PipelineError> {
    let baseline_bits: Vec<bool> = verification.outcomes.iter().map(|o| o.baseline).collect();
    let skill_bits: Vec<bool> = verification.outcomes.iter().map(|o| o.skill).collect();
    let partition = partition_feedback(&baseline_bits, &skill_bits)?;

    let mut exhibits: Vec<Exhibit> = Vec::new();
    for (bucket, indices) in [
        ("repair", &partition.repair),
        ("regress", &partition.regress),
        ("fail", &partition.fail),
    ] {
        for &j in indices.iter().take(ctx.feedback_sample_cap) {
            let id = &verification.outcomes[j].id;
            let x = instances_by_id
                .get(id)
                .copied()
                .ok_or_else(|| PipelineError::MissingUpstream {
                    what: format!("verification instance {id}"),
                })?;
            let baseline = ver_baseline
                .records
                .get(id)
                .map(|r| &r.trajectory)
                .ok_or_else(|| PipelineError::VerificationBaselineMissing {
                    detail: format!("no cached baseline for instance {id}"),
                })?;
            let skill = verification
                .skill_trajectories
                .get(id)
                .ok_or_else(|| PipelineError::MissingUpstream {
                    what: format!("skill trajectory for instance {id}"),
                })?;
            exhibits.push(Exhibit {
                bucket,
                x,
                baseline,
                skill,
            });
        }
    }

    if exhibits.is_empty() {
        return Ok(FeedbackBundle::default());
    }

    let notes: Vec<(String, &'static str, String)> = scoped_pool(ctx.feedback_workers).install(
        || {
            exhibits
                .par_iter()
                .map(|exhibit| {
                    let request =
                        aux_request(&ctx.hub, &ctx.aux_agent, explain_prompt(round, exhibit));
                    let response =
                        ctx.hub
                            .call(&ctx.aux_agent, FEEDBACK_STAGE, Some(round), &request)?;
                    Ok((
                        exhibit.x.id.clone(),
                        exhibit.bucket,
                        response.content.trim().to_string(),
                    ))
                })
                .collect::<Result<Vec<_>, PipelineError>>()
        },
    )?;

    let evidence: Vec<String> = notes.iter().map(|(id, _, _)| id.clone()).collect();
    let request = aux_request(
        &ctx.hub,
        &ctx.aux_agent,
        aggregate_prompt(round, &evidence, &notes),
    );
    let reply = ctx
        .hub
        .call(&ctx.aux_agent, FEEDBACK_STAGE, Some(round), &request)?
        .content;

    Ok(FeedbackBundle {
        keep: field(&reply, "KEEP: ", round),
        remove: field(&reply, "REMOVE: ", round),
        add: field(&reply, "ADD: ", round),
        emphasize: field(&reply, "EMPHASIZE: ", round),
        evidence,
    })
}
