//! The rollout interaction loop: message → tool calls → observations, until
//! a final output or the step cap.

use std::sync::Arc;

use serde::Deserialize;

use super::hub::{GatewayError, ProviderHub};
use super::inject::{inject, LOAD_REFERENCE_TOOL};
use super::wire::{ChatMessage, ChatRequest};
use crate::artifact::{SkillArtifact, SkillStatus};
use crate::model::{TaskInstance, TokenUsage, Trajectory, TrajectoryStep};

/// Executes declared skill functions during rollouts. The gateway never runs
/// script code itself; deployments plug an executor in here.
pub trait ScriptExecutor: Send + Sync {
    fn execute(
        &self,
        skill: &SkillArtifact,
        function: &str,
        arguments: &str,
    ) -> Result<String, String>;
}

/// Default executor: scripts are stored and advertised but not runnable.
pub struct NotExecutable;

impl ScriptExecutor for NotExecutable {
    fn execute(
        &self,
        _skill: &SkillArtifact,
        _function: &str,
        _arguments: &str,
    ) -> Result<String, String> {
        Ok("not executable in this deployment".to_string())
    }
}

/// Per-run rollout parameters.
#[derive(Clone)]
pub struct RolloutOptions {
    pub baseline_system_prompt: String,
    pub step_cap: u32,
    pub executor: Arc<dyn ScriptExecutor>,
}

impl RolloutOptions {
    pub fn new(baseline_system_prompt: impl Into<String>) -> Self {
        Self {
            baseline_system_prompt: baseline_system_prompt.into(),
            step_cap: 30,
            executor: Arc::new(NotExecutable),
        }
    }

    pub fn with_step_cap(mut self, step_cap: u32) -> Self {
        self.step_cap = step_cap;
        self
    }
}

/// Returns the exact stored bytes of a named reference. Names are map keys,
/// never paths, so traversal attempts simply fail the lookup. Deprecated
/// skills refuse loads the same way they refuse injection.
pub fn load_reference<'s>(
    skill: &'s SkillArtifact,
    name: &str,
) -> Result<&'s str, GatewayError> {
    if skill.status == SkillStatus::Deprecated {
        return Err(GatewayError::DeprecatedSkillInjected {
            name: skill.name.clone(),
        });
    }
    skill
        .reference(name)
        .map(|r| r.content.as_str())
        .ok_or_else(|| GatewayError::UnknownReference {
            name: name.to_string(),
        })
}

#[derive(Deserialize)]
struct LoadReferenceArgs {
    name: String,
}

/// Resolves one tool call to its observation text. Failures become error
/// observations rather than aborting the rollout — the agent sees them and
/// may recover.
fn dispatch_tool(
    skill: Option<&SkillArtifact>,
    executor: &dyn ScriptExecutor,
    name: &str,
    arguments: &str,
) -> String {
    let Some(skill) = skill else {
        return format!("error: no skill loaded, tool {name} is unavailable");
    };
    if name == LOAD_REFERENCE_TOOL {
        let parsed: Result<LoadReferenceArgs, _> = serde_json::from_str(arguments);
        return match parsed {
            Ok(args) => match load_reference(skill, &args.name) {
                Ok(content) => content.to_string(),
                Err(_) => format!("error: unknown reference {}", args.name),
            },
            Err(_) => "error: invalid arguments for skill_load_reference".to_string(),
        };
    }
    if skill.script_functions().iter().any(|f| *f == name) {
        return match executor.execute(skill, name, arguments) {
            Ok(result) => result,
            Err(reason) => format!("error: {reason}"),
        };
    }
    format!("error: unknown tool {name}")
}

/// Rolls the agent out on one instance under the given intervention.
///
/// The loop alternates provider calls and tool dispatch until the agent
/// replies without tool calls (that reply is the final output) or the step
/// cap is reached (the trajectory is returned non-terminated, final output
/// absent). Only rollout-capable roles may be driven; auxiliary roles are
/// refused.
pub fn rollout(
    hub: &ProviderHub,
    agent_id: &str,
    x: &TaskInstance,
    skill: Option<&SkillArtifact>,
    seed: u64,
    stage: &str,
    round: Option<u32>,
    opts: &RolloutOptions,
) -> Result<Trajectory, GatewayError> {
    let role = hub.role(agent_id).ok_or_else(|| GatewayError::UnknownAgent {
        id: agent_id.to_string(),
    })?;
    if !role.may_rollout() {
        return Err(GatewayError::RoleViolation {
            id: agent_id.to_string(),
            role: role.as_str().to_string(),
            action: "perform task rollouts",
        });
    }
    let defaults = hub.defaults(agent_id).expect("registered agents have defaults").clone();
    let assembled = inject(&opts.baseline_system_prompt, skill)?;

    let mut messages = vec![
        ChatMessage::system(assembled.system_prompt.clone()),
        ChatMessage::user(format!("TASK INSTANCE {}\n{}", x.id, x.payload)),
    ];
    let tools = if assembled.tools.is_empty() {
        None
    } else {
        Some(assembled.tools.clone())
    };

    let mut steps: Vec<TrajectoryStep> = Vec::new();
    let mut token_usage = TokenUsage::default();
    let mut index = 0u32;

    for _ in 0..opts.step_cap {
        let request = ChatRequest {
            model: defaults.model.clone(),
            messages: messages.clone(),
            tools: tools.clone(),
            temperature: defaults.temperature,
            max_tokens: defaults.max_tokens,
            seed: Some(seed),
        };
        let response = hub.call(agent_id, stage, round, &request)?;
        token_usage.add(response.usage);

        if response.tool_calls.is_empty() {
            steps.push(TrajectoryStep::AgentMessage {
                index,
                content: response.content.clone(),
            });
            return Ok(Trajectory {
                instance_id: x.id.clone(),
                steps,
                final_output: Some(response.content),
                token_usage,
            });
        }

        if !response.content.is_empty() {
            steps.push(TrajectoryStep::AgentMessage {
                index,
                content: response.content.clone(),
            });
            index += 1;
        }
        messages.push(ChatMessage {
            role: "assistant".into(),
            content: response.content.clone(),
            tool_call_id: None,
            tool_calls: Some(response.tool_calls.clone()),
        });
        for call in &response.tool_calls {
            let result = dispatch_tool(
                assembled.intervention.skill(),
                opts.executor.as_ref(),
                &call.function.name,
                &call.function.arguments,
            );
            steps.push(TrajectoryStep::ToolCall {
                index,
                name: call.function.name.clone(),
                arguments: call.function.arguments.clone(),
                result: result.clone(),
            });
            index += 1;
            messages.push(ChatMessage::tool_result(call.id.clone(), result));
        }
    }

    log::warn!(
        "rollout for {} hit the {}-step cap without terminating",
        x.id,
        opts.step_cap
    );
    Ok(Trajectory {
        instance_id: x.id.clone(),
        steps,
        final_output: None,
        token_usage,
    })
}
