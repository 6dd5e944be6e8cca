//! Task, trajectory, and outcome data model shared by every stage: dataset
//! splits, the evaluator contract, per-call seed derivation, and the
//! append-only rollout cache.

mod evaluator;
mod instance;
mod seed;
mod split;
mod store;

pub use evaluator::{
    EnvironmentCallback, EvalError, Evaluator, EvaluatorKind, EvaluatorSpec, JudgeClient,
};
pub use instance::{
    DatasetSplit, OutcomeRecord, TaskInstance, TokenUsage, Trajectory, TrajectoryStep,
};
pub use seed::derive_seed;
pub use split::{split_dataset, SplitError};
pub use store::{RolloutRecord, StoreError, TrajectoryStore};
