//! Deterministic provider behaviors used for offline runs and tests. They
//! parse the same prompt layouts the real pipeline emits, so swapping a live
//! endpoint for a scripted double changes nothing upstream.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::provider::{ChatProvider, ProviderError};
use super::wire::{ChatRequest, ChatResponse};
use crate::artifact::{ReferenceDoc, ScriptFile};

/// Extracts the behavior-variant marker (`variant:v<r>`) from an assembled
/// system prompt. Absent marker means the baseline prompt (no skill, or a
/// skill that does not carry one).
pub fn variant_marker(system_prompt: &str) -> Option<String> {
    let at = system_prompt.find("variant:v")?;
    let digits: String = system_prompt[at + "variant:v".len()..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if digits.is_empty() {
        None
    } else {
        Some(format!("v{digits}"))
    }
}

fn system_content(request: &ChatRequest) -> &str {
    request
        .messages
        .iter()
        .find(|m| m.role == "system")
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

fn user_content(request: &ChatRequest) -> &str {
    request
        .messages
        .iter()
        .find(|m| m.role == "user")
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

/// First line of the form `<prefix><rest>`, returning `<rest>` trimmed.
fn line_after(text: &str, prefix: &str) -> Option<String> {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .map(|r| r.trim().to_string())
}

/// Simulates the task-solving agent. Correctness is a pure function of
/// (instance id, injected behavior variant): with no variant marker the
/// baseline set applies; a marker selects its entry in `variant_correct`,
/// falling back to baseline when the variant is not listed (a skill with no
/// effect).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedAgentBehavior {
    /// Verbatim answers per instance id, used when the instance is answered
    /// correctly. Missing entries fall back to `ANSWER <id>`.
    pub answers: BTreeMap<String, String>,
    /// Reply given on instances the behavior gets wrong.
    pub default_answer: String,
    pub baseline_correct: BTreeSet<String>,
    pub variant_correct: BTreeMap<String, BTreeSet<String>>,
}

impl ScriptedAgentBehavior {
    pub fn new(baseline_correct: impl IntoIterator<Item = String>) -> Self {
        Self {
            answers: BTreeMap::new(),
            default_answer: "FAIL".to_string(),
            baseline_correct: baseline_correct.into_iter().collect(),
            variant_correct: BTreeMap::new(),
        }
    }

    pub fn with_variant(
        mut self,
        variant: impl Into<String>,
        correct: impl IntoIterator<Item = String>,
    ) -> Self {
        self.variant_correct
            .insert(variant.into(), correct.into_iter().collect());
        self
    }

    /// The canonical correct reply for an instance, shared with evaluator
    /// expectations.
    pub fn correct_answer(&self, id: &str) -> String {
        self.answers
            .get(id)
            .cloned()
            .unwrap_or_else(|| format!("ANSWER {id}"))
    }

    fn is_correct(&self, id: &str, variant: Option<&str>) -> bool {
        let set = variant
            .and_then(|v| self.variant_correct.get(v))
            .unwrap_or(&self.baseline_correct);
        set.contains(id)
    }
}

impl ChatProvider for ScriptedAgentBehavior {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let user = user_content(request);
        let id = line_after(user, "TASK INSTANCE ").unwrap_or_default();
        let variant = variant_marker(system_content(request));
        let text = if self.is_correct(&id, variant.as_deref()) {
            self.correct_answer(&id)
        } else {
            self.default_answer.clone()
        };
        Ok(ChatResponse::text(text, request))
    }
}

/// Simulates every auxiliary role (summaries, contrast, generation,
/// refinement, feedback aggregation, judging) by dispatching on the
/// `TASK: <kind>` header line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedAuxBehavior {
    pub family_summary: String,
    /// Per-instance rollout summaries; instances not listed get an echo of
    /// the prompt body, which keeps embeddings payload-driven.
    pub rollout_summaries: BTreeMap<String, String>,
    pub cluster_note: String,
    /// Scripts emitted alongside a first-round generation reply.
    pub emit_scripts: Vec<ScriptFile>,
    /// References emitted alongside a first-round generation reply.
    pub emit_references: Vec<ReferenceDoc>,
    /// Scripts emitted on refinement replies (rounds after the first); used
    /// to exercise the tool-surface freeze.
    pub emit_scripts_on_refine: Vec<ScriptFile>,
    /// Reply without the required sections until the retry prompt arrives.
    pub malformed_first_attempt: bool,
    /// Never reply with the required sections.
    pub malformed_always: bool,
    pub feedback_keep: String,
    pub feedback_remove: String,
    pub feedback_add: String,
    pub feedback_emphasize: String,
    /// Judge scores per instance id; instances not listed score 1.0 exactly
    /// when the prompt carries the canonical `ANSWER <id>` marker.
    pub judge_probs: BTreeMap<String, f64>,
}

impl Default for ScriptedAuxBehavior {
    fn default() -> Self {
        Self {
            family_summary: "synthetic task family".to_string(),
            rollout_summaries: BTreeMap::new(),
            cluster_note: "shared structure".to_string(),
            emit_scripts: Vec::new(),
            emit_references: Vec::new(),
            emit_scripts_on_refine: Vec::new(),
            malformed_first_attempt: false,
            malformed_always: false,
            feedback_keep: "the stepwise procedure".to_string(),
            feedback_remove: "redundant caveats".to_string(),
            feedback_add: "explicit unit checks".to_string(),
            feedback_emphasize: "verify before answering".to_string(),
            judge_probs: BTreeMap::new(),
        }
    }
}

impl ScriptedAuxBehavior {
    fn summarize_rollout(&self, user: &str) -> String {
        let id = line_after(user, "INSTANCE ").unwrap_or_default();
        let polarity = line_after(user, "POLARITY: ").unwrap_or_default();
        if let Some(s) = self.rollout_summaries.get(&id) {
            return s.clone();
        }
        let body: Vec<&str> = user
            .lines()
            .skip(1)
            .filter(|l| {
                !l.starts_with("INSTANCE ") && !l.starts_with("POLARITY: ") && !l.is_empty()
            })
            .collect();
        format!("rollout {id} ({polarity}): {}", body.join(" "))
    }

    fn skill_sections(&self, round: u32, refine: bool) -> String {
        let mut out = String::new();
        out.push_str("## Task Context\n");
        out.push_str(&format!(
            "{} — apply the documented procedure. variant:v{round}\n\n",
            self.family_summary
        ));
        out.push_str("## Success Patterns\n");
        out.push_str(&format!(
            "- restate the goal, then solve stepwise (round {round})\n- {}\n\n",
            self.feedback_emphasize
        ));
        out.push_str("## Failure Lessons\n");
        out.push_str(&format!(
            "- do not answer before checking units (round {round})\n"
        ));
        let extras = if refine {
            (&self.emit_scripts_on_refine, &[][..])
        } else {
            (&self.emit_scripts, self.emit_references.as_slice())
        };
        for s in extras.0 {
            out.push_str(&format!(
                "\n## Script: name={}, functions={}\n{}",
                s.name,
                s.declared_functions.join(","),
                s.content
            ));
            if !s.content.ends_with('\n') {
                out.push('\n');
            }
        }
        for r in extras.1 {
            out.push_str(&format!("\n## Reference: name={}\n{}", r.name, r.content));
            if !r.content.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }

    fn generate_or_refine(&self, user: &str, refine: bool) -> String {
        let reprompted = user.contains("REPROMPT:");
        if self.malformed_always || (self.malformed_first_attempt && !reprompted) {
            return "I could not structure this request.".to_string();
        }
        let round: u32 = line_after(user, "ROUND: ")
            .and_then(|r| r.parse().ok())
            .unwrap_or(1);
        self.skill_sections(round, refine)
    }

    fn judge(&self, user: &str) -> String {
        let id = line_after(user, "INSTANCE ").unwrap_or_default();
        if let Some(p) = self.judge_probs.get(&id) {
            return format!("{p}");
        }
        if user.contains(&format!("ANSWER {id}")) {
            "1.0".to_string()
        } else {
            "0.0".to_string()
        }
    }
}

impl ChatProvider for ScriptedAuxBehavior {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let user = user_content(request);
        let kind = line_after(user, "TASK: ").unwrap_or_default();
        let text = match kind.as_str() {
            "summarize-rollout" => self.summarize_rollout(user),
            "summarize-family" => self.family_summary.clone(),
            "summarize-cluster" => {
                let members = line_after(user, "MEMBERS: ").unwrap_or_default();
                format!("cluster |P|={members}: {}", self.cluster_note)
            }
            "contrast" => {
                let pair = line_after(user, "PAIR: ").unwrap_or_default();
                format!("contrast {pair}: the failure skipped a check the success performed")
            }
            "same-task" => {
                let a = line_after(user, "TAG A: ").unwrap_or_default();
                let b = line_after(user, "TAG B: ").unwrap_or_default();
                if a == b || a == "-" || b == "-" {
                    "YES".to_string()
                } else {
                    "NO".to_string()
                }
            }
            "generate-skill" => self.generate_or_refine(user, false),
            "refine-skill" => self.generate_or_refine(user, true),
            "explain-outcome" => {
                let id = line_after(user, "INSTANCE ").unwrap_or_default();
                let bucket = line_after(user, "BUCKET: ").unwrap_or_default();
                format!("outcome note for {id} ({bucket})")
            }
            "aggregate-feedback" => {
                let evidence = line_after(user, "EVIDENCE: ").unwrap_or_default();
                format!(
                    "KEEP: {}\nREMOVE: {}\nADD: {} (seen on {evidence})\nEMPHASIZE: {}",
                    self.feedback_keep,
                    self.feedback_remove,
                    self.feedback_add,
                    self.feedback_emphasize
                )
            }
            "judge" => self.judge(user),
            _ => "UNSUPPORTED TASK".to_string(),
        };
        Ok(ChatResponse::text(text, request))
    }
}
