//! Plain data types: task instances, trajectories, outcomes, splits.

use serde::{Deserialize, Serialize};

/// One task drawn from a benchmark pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    /// Opaque identifier, unique within a pool.
    pub id: String,
    /// Content presented to the agent; never empty.
    pub payload: String,
    /// Optional free-text task-type label consumed by the same-task check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_tag: Option<String>,
}

impl TaskInstance {
    pub fn new(id: impl Into<String>, payload: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            payload: payload.into(),
            task_tag: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.task_tag = Some(tag.into());
        self
    }
}

/// Prompt/output token counts for one rollout or one provider call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.output_tokens += other.output_tokens;
    }
}

/// One event in an agent interaction loop. Indices are monotone within a
/// trajectory so serialization order is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryStep {
    AgentMessage {
        index: u32,
        content: String,
    },
    ToolCall {
        index: u32,
        name: String,
        arguments: String,
        result: String,
    },
    Observation {
        index: u32,
        content: String,
    },
}

impl TrajectoryStep {
    pub fn index(&self) -> u32 {
        match self {
            TrajectoryStep::AgentMessage { index, .. } => *index,
            TrajectoryStep::ToolCall { index, .. } => *index,
            TrajectoryStep::Observation { index, .. } => *index,
        }
    }
}

/// Full record of one agent rollout on one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instance_id: String,
    pub steps: Vec<TrajectoryStep>,
    /// Present iff the rollout terminated normally (step-capped and failed
    /// rollouts carry `None`).
    pub final_output: Option<String>,
    pub token_usage: TokenUsage,
}

impl Trajectory {
    pub fn terminated(&self) -> bool {
        self.final_output.is_some()
    }
}

/// Evaluator verdict for one (instance, trajectory) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub instance_id: String,
    /// Success probability assigned by the evaluator, in [0, 1].
    pub success_prob: f64,
    /// Binary outcome; for deterministic evaluators equals `success_prob`.
    pub outcome: bool,
    /// True iff the outcome was Bernoulli-sampled from `success_prob`.
    pub sampled: bool,
    /// Populated when a rollout or evaluation failed and the outcome was
    /// forced to 0 rather than dropped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Disjoint induction/verification partition of a task pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub induction: Vec<TaskInstance>,
    pub verification: Vec<TaskInstance>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn induction_ids(&self) -> Vec<&str> {
        self.induction.iter().map(|x| x.id.as_str()).collect()
    }

    pub fn verification_ids(&self) -> Vec<&str> {
        self.verification.iter().map(|x| x.id.as_str()).collect()
    }
}
