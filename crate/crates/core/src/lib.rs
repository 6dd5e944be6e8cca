//! Synthesizes a single auditable inference-time skill for an LLM agent from
//! its own success and failure trajectories.
//!
//! The pipeline has three stages: baseline elicitation collects no-skill
//! rollouts over an induction split and caches paired baselines on a
//! verification split; contrastive induction compresses the rollouts into a
//! diagnostic summary (task summary, failure clusters, success clusters,
//! nearest-neighbor contrasts); and a generation-verification-refinement loop
//! turns the diagnostics into candidate skills, measures each candidate's net
//! gain (repairs minus regressions) against the cached baselines, and stamps
//! the best candidate `active` or `deprecated` through a verification gate.
//!
//! Module map:
//! - [`model`] — task instances, trajectories, outcomes, dataset splits, evaluators
//! - [`artifact`] — the skill artifact, its bundle format, and edit restrictions
//! - [`gateway`] — provider clients, skill injection, and the rollout loop
//! - [`induction`] — rollout summaries, embeddings, clustering, contrast pairing
//! - [`stats`] — the paired interventional calculus (pure, provider-free)
//! - [`pipeline`] — the end-to-end loop orchestrator and run directory
//! - [`simlab`] — synthetic-agent simulator backing the statistical checks
//! - [`eval`] — paired held-out evaluation, transfer matrices, report emission
//! - [`config`] — run configuration shared by the CLI and the library

pub mod artifact;
pub mod config;
pub mod eval;
pub mod gateway;
pub mod induction;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod simlab;
pub mod stats;

/// Scalar type used by the concrete pipeline (embeddings, distances, rates).
pub type Scalar = f64;

/// Embedding vector over the crate scalar.
pub type Embedding = Vec<Scalar>;
