//! Skill injection: assembling the system prompt with a single delimited
//! skill slot and advertising reference/script tools.

use serde_json::json;

use super::hub::GatewayError;
use super::wire::ToolSpec;
use crate::artifact::{SkillArtifact, SkillStatus, HEADER_CTX, HEADER_FAIL, HEADER_SUCC};

/// Sentinel lines delimiting the skill slot, so audit tooling can extract the
/// deployed skill from any logged prompt.
pub const SKILL_OPEN: &str = "<<<SKILL>>>";
pub const SKILL_CLOSE: &str = "<<<END SKILL>>>";

/// Name of the on-demand reference loading tool.
pub const LOAD_REFERENCE_TOOL: &str = "skill_load_reference";

/// What was loaded into the agent's context.
#[derive(Debug, Clone, PartialEq)]
pub enum Intervention {
    Empty,
    Skill(SkillArtifact),
}

impl Intervention {
    pub fn skill(&self) -> Option<&SkillArtifact> {
        match self {
            Intervention::Empty => None,
            Intervention::Skill(skill) => Some(skill),
        }
    }
}

/// System prompt plus advertised tools for one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledPrompt {
    pub system_prompt: String,
    pub tools: Vec<ToolSpec>,
    pub intervention: Intervention,
}

/// Assembles the rollout context. A pure function of the baseline system
/// prompt and the skill body/tool names: no skill means the baseline prompt
/// verbatim with no tools; a skill adds exactly one delimited slot holding
/// the three body sections. Reference documents are never inlined — the
/// `skill_load_reference` tool is advertised instead, and each declared
/// script function becomes a callable tool.
///
/// Candidates and active skills inject alike (construction-time verification
/// rolls out unstamped candidates); deprecated skills never inject.
pub fn inject(
    baseline_system_prompt: &str,
    skill: Option<&SkillArtifact>,
) -> Result<AssembledPrompt, GatewayError> {
    let Some(skill) = skill else {
        return Ok(AssembledPrompt {
            system_prompt: baseline_system_prompt.to_string(),
            tools: vec![],
            intervention: Intervention::Empty,
        });
    };
    if skill.status == SkillStatus::Deprecated {
        return Err(GatewayError::DeprecatedSkillInjected {
            name: skill.name.clone(),
        });
    }

    let system_prompt = format!(
        "{baseline_system_prompt}\n{SKILL_OPEN}\n{HEADER_CTX}\n{}\n\n{HEADER_SUCC}\n{}\n\n{HEADER_FAIL}\n{}\n{SKILL_CLOSE}\n",
        skill.body.ctx, skill.body.succ, skill.body.fail
    );

    let mut tools = Vec::new();
    if !skill.references.is_empty() {
        let names: Vec<&str> = skill.references.iter().map(|r| r.name.as_str()).collect();
        tools.push(ToolSpec::function(
            LOAD_REFERENCE_TOOL,
            format!(
                "Load a stored reference document by name. Available: {}",
                names.join(", ")
            ),
            json!({
                "type": "object",
                "properties": {"name": {"type": "string"}},
                "required": ["name"]
            }),
        ));
    }
    for script in &skill.scripts {
        for function in &script.declared_functions {
            tools.push(ToolSpec::function(
                function,
                format!("Declared function {function} from skill script {}", script.name),
                json!({"type": "object", "additionalProperties": true}),
            ));
        }
    }

    Ok(AssembledPrompt {
        system_prompt,
        tools,
        intervention: Intervention::Skill(skill.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{ReferenceDoc, ScriptFile, SkillBody, SkillDraft};
    use std::collections::BTreeMap;

    fn skill(scripts: Vec<ScriptFile>, references: Vec<ReferenceDoc>) -> SkillArtifact {
        SkillArtifact::new(
            "unit-skill",
            SkillDraft {
                body: SkillBody {
                    ctx: "context text".into(),
                    succ: "success text".into(),
                    fail: "failure text".into(),
                },
                scripts,
                references,
            },
            BTreeMap::new(),
            1,
            "cafe",
        )
        .unwrap()
    }

    #[test]
    fn empty_intervention_is_the_baseline_prompt_exactly() {
        let assembled = inject("You are a careful agent.", None).unwrap();
        assert_eq!(assembled.system_prompt, "You are a careful agent.");
        assert!(assembled.tools.is_empty());
        assert_eq!(assembled.intervention, Intervention::Empty);
        assert!(!assembled.system_prompt.contains(SKILL_OPEN));
    }

    #[test]
    fn skill_slot_is_delimited_exactly_once() {
        let s = skill(vec![], vec![]);
        let assembled = inject("base", Some(&s)).unwrap();
        assert_eq!(assembled.system_prompt.matches(SKILL_OPEN).count(), 1);
        assert_eq!(assembled.system_prompt.matches(SKILL_CLOSE).count(), 1);
        assert!(assembled.system_prompt.starts_with("base\n<<<SKILL>>>\n"));
        assert!(assembled.system_prompt.contains("context text"));
        assert!(assembled.system_prompt.contains("success text"));
        assert!(assembled.system_prompt.contains("failure text"));
    }

    #[test]
    fn references_are_advertised_not_inlined() {
        let s = skill(
            vec![],
            vec![
                ReferenceDoc {
                    name: "notes.md".into(),
                    content: "SECRET-REFERENCE-BYTES".into(),
                },
                ReferenceDoc {
                    name: "units.md".into(),
                    content: "MORE-BYTES".into(),
                },
            ],
        );
        let assembled = inject("base", Some(&s)).unwrap();
        assert!(!assembled.system_prompt.contains("SECRET-REFERENCE-BYTES"));
        assert_eq!(assembled.tools.len(), 1);
        assert_eq!(assembled.tools[0].function.name, LOAD_REFERENCE_TOOL);
        assert!(assembled.tools[0]
            .function
            .description
            .contains("notes.md, units.md"));
    }

    #[test]
    fn script_functions_become_tools() {
        let s = skill(
            vec![ScriptFile {
                name: "conv.py".into(),
                declared_functions: vec!["skill_convert".into(), "skill_round".into()],
                content: "code".into(),
            }],
            vec![],
        );
        let assembled = inject("base", Some(&s)).unwrap();
        let names: Vec<&str> = assembled
            .tools
            .iter()
            .map(|t| t.function.name.as_str())
            .collect();
        assert_eq!(names, vec!["skill_convert", "skill_round"]);
    }

    #[test]
    fn deprecated_skill_never_injects() {
        let s = skill(vec![], vec![])
            .with_status(SkillStatus::Deprecated)
            .unwrap();
        let err = inject("base", Some(&s)).unwrap_err();
        assert!(matches!(err, GatewayError::DeprecatedSkillInjected { .. }));
    }

    #[test]
    fn injection_is_a_pure_function_of_prompt_and_body() {
        let s = skill(vec![], vec![]);
        let a = inject("base", Some(&s)).unwrap();
        let b = inject("base", Some(&s)).unwrap();
        assert_eq!(a.system_prompt, b.system_prompt);
        let mut renamed = s.clone();
        renamed.name = "other-name".into();
        renamed.round = 7;
        let c = inject("base", Some(&renamed)).unwrap();
        assert_eq!(
            a.system_prompt, c.system_prompt,
            "prompt depends on the body, not artifact bookkeeping"
        );
    }
}
