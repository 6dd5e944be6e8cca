//! Task-level evaluator: maps (instance, trajectory) to a success probability
//! and a binary outcome.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::instance::{OutcomeRecord, TaskInstance, Trajectory};
use super::seed::derive_seed;

/// Hook for judge-prompted evaluation (an auxiliary model scoring the
/// trajectory). Implementations map the pair to a success probability.
pub trait JudgeClient: Send + Sync {
    fn success_prob(&self, x: &TaskInstance, tau: &Trajectory) -> Result<f64, String>;
}

/// Hook for benchmark environments that score trajectories themselves.
/// No concrete environment ships here; real environments plug in through
/// this trait.
pub trait EnvironmentCallback: Send + Sync {
    fn success_prob(&self, x: &TaskInstance, tau: &Trajectory) -> Result<f64, String>;
}

/// Evaluator family and its kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvaluatorKind {
    /// Compare the trajectory's final output against an expected string,
    /// either per instance id or one global answer.
    ExactMatch {
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        expected: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default_expected: Option<String>,
    },
    /// Score via an auxiliary judge model (wired in at runtime).
    JudgePrompted,
    /// Score via a benchmark environment callback (wired in at runtime).
    EnvironmentCallback,
    /// Deterministic test double: success probability per instance id, with
    /// an optional fallback.
    ScriptedTestDouble {
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        success_prob: BTreeMap<String, f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default_prob: Option<f64>,
    },
}

/// Serializable evaluator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorSpec {
    #[serde(flatten)]
    pub kind: EvaluatorKind,
    /// Root seed for Bernoulli sampling; per-call seeds are derived from it.
    pub rng_seed: u64,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluator unavailable: {reason}")]
    EvaluatorUnavailable { reason: String },
    #[error("trajectory for {instance_id} has no final output but the evaluator requires one")]
    MalformedTrajectory { instance_id: String },
    #[error("trajectory belongs to {got}, expected {expected}")]
    WrongInstance { expected: String, got: String },
    #[error("success probability {value} outside [0, 1] for {instance_id}")]
    InvalidSuccessProb { instance_id: String, value: f64 },
    #[error("scripted evaluator has no success probability for {instance_id}")]
    MissingScriptedProb { instance_id: String },
}

/// Runtime evaluator: a spec plus optional judge/callback hooks.
#[derive(Clone)]
pub struct Evaluator {
    spec: EvaluatorSpec,
    judge: Option<Arc<dyn JudgeClient>>,
    callback: Option<Arc<dyn EnvironmentCallback>>,
}

impl Evaluator {
    pub fn new(spec: EvaluatorSpec) -> Self {
        Self {
            spec,
            judge: None,
            callback: None,
        }
    }

    pub fn with_judge(mut self, judge: Arc<dyn JudgeClient>) -> Self {
        self.judge = Some(judge);
        self
    }

    pub fn with_callback(mut self, callback: Arc<dyn EnvironmentCallback>) -> Self {
        self.callback = Some(callback);
        self
    }

    pub fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    /// Scores one trajectory. `context` labels the evaluation site (for
    /// example `"verify/r3"`), so repeated evaluations of the same instance
    /// in different stages draw independent Bernoulli samples while staying
    /// reproducible and parallel-safe.
    pub fn evaluate(
        &self,
        x: &TaskInstance,
        tau: &Trajectory,
        context: &str,
    ) -> Result<OutcomeRecord, EvalError> {
        if tau.instance_id != x.id {
            return Err(EvalError::WrongInstance {
                expected: x.id.clone(),
                got: tau.instance_id.clone(),
            });
        }

        let success_prob = match &self.spec.kind {
            EvaluatorKind::ExactMatch {
                expected,
                default_expected,
            } => {
                let want = expected
                    .get(&x.id)
                    .or(default_expected.as_ref())
                    .ok_or_else(|| EvalError::EvaluatorUnavailable {
                        reason: format!("no expected answer configured for {}", x.id),
                    })?;
                let got = tau
                    .final_output
                    .as_deref()
                    .ok_or_else(|| EvalError::MalformedTrajectory {
                        instance_id: x.id.clone(),
                    })?;
                if got.trim() == want.trim() {
                    1.0
                } else {
                    0.0
                }
            }
            EvaluatorKind::JudgePrompted => {
                let judge = self
                    .judge
                    .as_ref()
                    .ok_or_else(|| EvalError::EvaluatorUnavailable {
                        reason: "judge-prompted evaluator has no judge client wired in".into(),
                    })?;
                judge
                    .success_prob(x, tau)
                    .map_err(|reason| EvalError::EvaluatorUnavailable { reason })?
            }
            EvaluatorKind::EnvironmentCallback => {
                let callback =
                    self.callback
                        .as_ref()
                        .ok_or_else(|| EvalError::EvaluatorUnavailable {
                            reason: "environment-callback evaluator has no callback wired in"
                                .into(),
                        })?;
                callback
                    .success_prob(x, tau)
                    .map_err(|reason| EvalError::EvaluatorUnavailable { reason })?
            }
            EvaluatorKind::ScriptedTestDouble {
                success_prob,
                default_prob,
            } => success_prob
                .get(&x.id)
                .copied()
                .or(*default_prob)
                .ok_or_else(|| EvalError::MissingScriptedProb {
                    instance_id: x.id.clone(),
                })?,
        };

        if !(0.0..=1.0).contains(&success_prob) {
            return Err(EvalError::InvalidSuccessProb {
                instance_id: x.id.clone(),
                value: success_prob,
            });
        }

        let (outcome, sampled) = if success_prob == 0.0 || success_prob == 1.0 {
            (success_prob == 1.0, false)
        } else {
            let seed = derive_seed(self.spec.rng_seed, context, &x.id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (rng.gen_bool(success_prob), true)
        };

        Ok(OutcomeRecord {
            instance_id: x.id.clone(),
            success_prob,
            outcome,
            sampled,
            diagnostic: None,
        })
    }
}
