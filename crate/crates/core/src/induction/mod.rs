//! Diagnostic induction: rollout summaries, embeddings, adaptive clustering,
//! and nearest-neighbor contrastive pairing, compressed into one summary.

mod embed;
mod engine;
mod geometry;

pub use embed::{Embedder, EmbedderError, HashEmbedder};
pub use engine::{
    compress, elicit_baseline, family_prompt, nearest_success_pairs, pair_contrasts,
    render_trajectory, rollout_summary_prompt, summarize_cluster, summarize_rollouts,
    summarize_task, write_embeddings_csv, BaselineSet, ClusterSummary, CompressOutput,
    ContrastAuditEntry, ContrastObservation, DiagnosticSummary, InductionConfig, InductionContext,
    InductionError, Polarity, RolloutSummary,
};
pub(crate) use engine::scoped_pool;
pub use engine::INDUCE_STAGE;
pub use geometry::{choose_k, cosine_distance, kmeans, l2_normalize, KMeans};
