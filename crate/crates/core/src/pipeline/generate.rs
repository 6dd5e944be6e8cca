//! Candidate skill generation and refinement: assembles the diagnostic
//! exposure into a fixed prompt, parses the sectioned reply into a draft, and
//! turns it into an artifact (first round) or a restricted edit (later
//! rounds).

use crate::artifact::{
    restrict_refinement_edit, ReferenceDoc, ScriptFile, SkillArtifact, SkillBody, SkillDraft,
};
use crate::gateway::{ChatMessage, ChatRequest};
use crate::induction::{ClusterSummary, ContrastObservation, DiagnosticSummary};

use super::{FeedbackBundle, PipelineContext, PipelineError};

const HEADER_CTX: &str = "## Task Context";
const HEADER_SUCC: &str = "## Success Patterns";
const HEADER_FAIL: &str = "## Failure Lessons";
const HEADER_SCRIPT: &str = "## Script: ";
const HEADER_REFERENCE: &str = "## Reference: ";

/// Appended to the original prompt for the single retry after a malformed
/// reply. Distinct text, so the retry is a distinct cache entry.
const REPROMPT_SUFFIX: &str =
    "\nREPROMPT: the previous response was malformed; emit all three sections.";

const GENERATE_INSTRUCTIONS: &str = "Write a deployable skill for the task family described by the diagnostic evidence below. Reply with exactly three sections headed '## Task Context', '## Success Patterns', and '## Failure Lessons': ground the context in the family summary, the success patterns in the success clusters and contrasts, and the failure lessons in the failure clusters and contrasts. Optionally append script blocks ('## Script: name=<file>, functions=<comma-separated skill_-prefixed names>') and reference documents ('## Reference: name=<file>').";

const REFINE_INSTRUCTIONS: &str = "Revise the current skill according to the verification feedback below, keeping what works rather than rewriting from scratch. Reply with the same three sections headed '## Task Context', '## Success Patterns', and '## Failure Lessons'. The tool surface is frozen: do not add or modify scripts or references.";

/// The slice of a diagnostic summary a generation prompt may expose, capped
/// per the pipeline configuration.
#[derive(Debug)]
pub struct Exposure<'a> {
    pub failures: Vec<&'a ClusterSummary>,
    pub successes: Vec<&'a ClusterSummary>,
    pub contrasts: Vec<&'a ContrastObservation>,
}

fn lowest_member(cluster: &ClusterSummary) -> &str {
    cluster
        .member_ids
        .iter()
        .min()
        .map(String::as_str)
        .unwrap_or("")
}

/// Keeps the `cap` largest clusters (ties to the lowest member id), then
/// restores canonical order by lowest member id.
fn select_clusters<'a>(clusters: &'a [ClusterSummary], cap: usize) -> Vec<&'a ClusterSummary> {
    let mut picked: Vec<&ClusterSummary> = clusters.iter().collect();
    picked.sort_by(|a, b| {
        b.member_ids
            .len()
            .cmp(&a.member_ids.len())
            .then_with(|| lowest_member(a).cmp(lowest_member(b)))
    });
    picked.truncate(cap);
    picked.sort_by(|a, b| lowest_member(a).cmp(lowest_member(b)));
    picked
}

/// Applies the exposure caps (failure clusters, success clusters, contrasts)
/// to a diagnostic summary. Contrasts keep their stored order: ascending
/// pair distance, nearest evidence first.
pub fn select_exposure<'a>(ctx: &PipelineContext, z: &'a DiagnosticSummary) -> Exposure<'a> {
    Exposure {
        failures: select_clusters(&z.failures, ctx.exposure_failure_clusters),
        successes: select_clusters(&z.successes, ctx.exposure_success_clusters),
        contrasts: z.contrasts.iter().take(ctx.exposure_contrasts).collect(),
    }
}

fn push_exposure(out: &mut String, a0: &str, exposure: &Exposure) {
    out.push_str(&format!("\nFAMILY: {a0}\n"));
    for cluster in &exposure.failures {
        out.push_str(&format!(
            "\nFAILURE CLUSTER members={}:\n{}\n",
            cluster.member_ids.join(","),
            cluster.text
        ));
    }
    for cluster in &exposure.successes {
        out.push_str(&format!(
            "\nSUCCESS CLUSTER members={}:\n{}\n",
            cluster.member_ids.join(","),
            cluster.text
        ));
    }
    for contrast in &exposure.contrasts {
        out.push_str(&format!(
            "\nCONTRAST {} {} same-task={}:\n{}\n",
            contrast.failure_id, contrast.success_id, contrast.same_task, contrast.text
        ));
    }
}

/// First-round generation prompt: instructions, family summary, and the
/// capped diagnostic exposure.
pub fn build_generation_prompt(ctx: &PipelineContext, z: &DiagnosticSummary) -> String {
    let exposure = select_exposure(ctx, z);
    let mut out = format!("TASK: generate-skill\nROUND: 1\n{GENERATE_INSTRUCTIONS}\n");
    push_exposure(&mut out, &z.a0, &exposure);
    out
}

/// Refinement prompt: instructions, the same diagnostic exposure, the current
/// body, and the previous round's feedback. Raw trajectories never appear
/// here; the feedback bundle is their only residue.
pub fn build_refinement_prompt(
    ctx: &PipelineContext,
    prev: &SkillArtifact,
    z: &DiagnosticSummary,
    feedback: &FeedbackBundle,
    round: u32,
) -> String {
    let exposure = select_exposure(ctx, z);
    let mut out = format!("TASK: refine-skill\nROUND: {round}\n{REFINE_INSTRUCTIONS}\n");
    push_exposure(&mut out, &z.a0, &exposure);
    out.push_str(&format!(
        "\nCURRENT SKILL\n{HEADER_CTX}\n{}\n\n{HEADER_SUCC}\n{}\n\n{HEADER_FAIL}\n{}\n",
        prev.body.ctx, prev.body.succ, prev.body.fail
    ));
    out.push_str(&format!(
        "\nFEEDBACK KEEP: {}\nFEEDBACK REMOVE: {}\nFEEDBACK ADD: {}\nFEEDBACK EMPHASIZE: {}\n",
        feedback.keep, feedback.remove, feedback.add, feedback.emphasize
    ));
    out
}

#[derive(Debug, PartialEq, Eq)]
enum Block {
    Ctx,
    Succ,
    Fail,
    Script { name: String, functions: Vec<String> },
    Reference { name: String },
}

fn parse_block_header(line: &str) -> Result<Option<Block>, String> {
    if line == HEADER_CTX {
        return Ok(Some(Block::Ctx));
    }
    if line == HEADER_SUCC {
        return Ok(Some(Block::Succ));
    }
    if line == HEADER_FAIL {
        return Ok(Some(Block::Fail));
    }
    if let Some(rest) = line.strip_prefix(HEADER_SCRIPT) {
        let (name_part, fn_part) = rest
            .split_once(", functions=")
            .ok_or_else(|| format!("script header lacks ', functions=': {line:?}"))?;
        let name = name_part
            .strip_prefix("name=")
            .ok_or_else(|| format!("script header lacks 'name=': {line:?}"))?;
        let functions = fn_part
            .split(',')
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .map(str::to_string)
            .collect();
        return Ok(Some(Block::Script {
            name: name.trim().to_string(),
            functions,
        }));
    }
    if let Some(rest) = line.strip_prefix(HEADER_REFERENCE) {
        let name = rest
            .strip_prefix("name=")
            .ok_or_else(|| format!("reference header lacks 'name=': {line:?}"))?;
        return Ok(Some(Block::Reference {
            name: name.trim().to_string(),
        }));
    }
    Ok(None)
}

/// Section text: inner newlines kept, surrounding blank lines dropped.
fn section_text(lines: &[&str]) -> String {
    lines.join("\n").trim_matches('\n').to_string()
}

/// File content: trailing blank lines collapse to one final newline, matching
/// how the emitting model separates blocks.
fn file_content(lines: &[&str]) -> String {
    let raw = lines.join("\n");
    let trimmed = raw.trim_end_matches('\n');
    if trimmed.is_empty() {
        String::new()
    } else {
        format!("{trimmed}\n")
    }
}

/// Parses a generation reply into a draft. The reply must contain each of the
/// three section headers exactly once, in order; script and reference blocks
/// may follow any section. Block boundaries are recognized only on the exact
/// header lines, so section text may freely mention them inline.
pub fn parse_generation_reply(reply: &str) -> Result<SkillDraft, String> {
    let lines: Vec<&str> = reply.lines().collect();
    let mut blocks: Vec<(Block, usize)> = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        if let Some(block) = parse_block_header(line)? {
            blocks.push((block, idx));
        }
    }

    let positions: Vec<usize> = blocks.iter().map(|(_, idx)| *idx).collect();
    let mut ctx = None;
    let mut succ = None;
    let mut fail = None;
    let mut scripts = Vec::new();
    let mut references = Vec::new();
    for (slot, (block, start)) in blocks.into_iter().enumerate() {
        let end = positions
            .get(slot + 1)
            .copied()
            .unwrap_or(lines.len());
        let body_lines = &lines[start + 1..end];
        match block {
            Block::Ctx => {
                if ctx.replace(section_text(body_lines)).is_some() {
                    return Err(format!("duplicate section {HEADER_CTX:?}"));
                }
            }
            Block::Succ => {
                if ctx.is_none() {
                    return Err(format!("{HEADER_SUCC:?} precedes {HEADER_CTX:?}"));
                }
                if succ.replace(section_text(body_lines)).is_some() {
                    return Err(format!("duplicate section {HEADER_SUCC:?}"));
                }
            }
            Block::Fail => {
                if succ.is_none() {
                    return Err(format!("{HEADER_FAIL:?} precedes {HEADER_SUCC:?}"));
                }
                if fail.replace(section_text(body_lines)).is_some() {
                    return Err(format!("duplicate section {HEADER_FAIL:?}"));
                }
            }
            Block::Script { name, functions } => scripts.push(ScriptFile {
                name,
                declared_functions: functions,
                content: file_content(body_lines),
            }),
            Block::Reference { name } => references.push(ReferenceDoc {
                name,
                content: file_content(body_lines),
            }),
        }
    }

    let body = SkillBody {
        ctx: ctx.ok_or_else(|| format!("missing section {HEADER_CTX:?}"))?,
        succ: succ.ok_or_else(|| format!("missing section {HEADER_SUCC:?}"))?,
        fail: fail.ok_or_else(|| format!("missing section {HEADER_FAIL:?}"))?,
    };
    Ok(SkillDraft {
        body,
        scripts,
        references,
    })
}

fn generation_request(ctx: &PipelineContext, prompt: &str) -> ChatRequest {
    let defaults = ctx
        .hub
        .defaults(&ctx.aux_agent)
        .expect("auxiliary agent is registered")
        .clone();
    ChatRequest {
        model: defaults.model,
        messages: vec![
            ChatMessage::system(
                "You write and revise deployable agent skills, replying exactly in the requested sectioned format.",
            ),
            ChatMessage::user(prompt),
        ],
        tools: None,
        temperature: defaults.temperature,
        max_tokens: ctx.generation_max_tokens,
        seed: None,
    }
}

/// One auxiliary call, with exactly one reprompt if the reply cannot be
/// parsed; a second malformed reply aborts the round.
fn call_for_draft(
    ctx: &PipelineContext,
    stage: &str,
    round: u32,
    prompt: &str,
) -> Result<SkillDraft, PipelineError> {
    let response = ctx
        .hub
        .call(&ctx.aux_agent, stage, Some(round), &generation_request(ctx, prompt))?;
    match parse_generation_reply(&response.content) {
        Ok(draft) => Ok(draft),
        Err(first_reason) => {
            log::warn!("round {round}: malformed generation reply ({first_reason}); reprompting once");
            let retry_prompt = format!("{prompt}{REPROMPT_SUFFIX}");
            let retry = ctx.hub.call(
                &ctx.aux_agent,
                stage,
                Some(round),
                &generation_request(ctx, &retry_prompt),
            )?;
            parse_generation_reply(&retry.content)
                .map_err(|reason| PipelineError::MalformedGeneration { round, reason })
        }
    }
}

/// First-round generation: one auxiliary call over the diagnostic exposure,
/// parsed and assembled into a candidate artifact stamped with the diagnostic
/// content hash as provenance.
pub fn generate(
    ctx: &PipelineContext,
    z: &DiagnosticSummary,
) -> Result<SkillArtifact, PipelineError> {
    let prompt = build_generation_prompt(ctx, z);
    let draft = call_for_draft(ctx, "generate", 1, &prompt)?;
    draft.body.check_cap(ctx.body_char_cap)?;
    let skill = SkillArtifact::new(
        ctx.skill_name.clone(),
        draft,
        ctx.metadata.clone(),
        1,
        z.content_hash(),
    )?;
    Ok(skill)
}

/// Later-round refinement: the auxiliary model sees the previous body, the
/// diagnostic exposure, and the feedback bundle; its draft is accepted only
/// as a body edit (scripts and references stay frozen).
pub fn refine(
    ctx: &PipelineContext,
    prev: &SkillArtifact,
    z: &DiagnosticSummary,
    feedback: &FeedbackBundle,
    round: u32,
) -> Result<SkillArtifact, PipelineError> {
    let prompt = build_refinement_prompt(ctx, prev, z, feedback, round);
    let draft = call_for_draft(ctx, "generate", round, &prompt)?;
    draft.body.check_cap(ctx.body_char_cap)?;
    let skill = restrict_refinement_edit(prev, draft, round)?;
    Ok(skill)
}
