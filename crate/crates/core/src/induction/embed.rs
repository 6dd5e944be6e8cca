//! Text encoders for rollout summaries.
//!
//! The offline default is seeded feature hashing: tokens are hashed into a
//! fixed number of signed buckets and the result is L2-normalized. It is
//! deterministic, dependency-free, and good enough for the clustering and
//! nearest-neighbor geometry the pipeline needs. A real encoder service can
//! be plugged in through the same trait.

use thiserror::Error;

use super::geometry::l2_normalize;
use crate::model::TaskInstance;
use crate::{Embedding, Scalar};

/// Separator between the instance payload and the rollout summary in the
/// embedded text, so the two fields cannot smear into each other.
const FIELD_SEPARATOR: char = '\u{1f}';

#[derive(Debug, Error)]
pub enum EmbedderError {
    #[error("embedding provider failure: {reason}")]
    Provider { reason: String },
    #[error("rollout summary is empty for {instance_id}")]
    EmptySummary { instance_id: String },
}

/// Maps an (instance, summary) pair to a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, x: &TaskInstance, rho: &str) -> Result<Embedding, EmbedderError>;
}

/// Seeded signed feature hashing over lowercased alphanumeric tokens.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256, 42)
    }
}

fn fnv1a64(seed: u64, token: &str) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET_BASIS ^ seed;
    for byte in token.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, x: &TaskInstance, rho: &str) -> Result<Embedding, EmbedderError> {
        if rho.trim().is_empty() {
            return Err(EmbedderError::EmptySummary {
                instance_id: x.id.clone(),
            });
        }
        let text = format!("{}{FIELD_SEPARATOR}{}", x.payload, rho);
        let mut vector = vec![0.0 as Scalar; self.dim];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let hash = fnv1a64(self.seed, &token.to_lowercase());
            let bucket = (hash % self.dim as u64) as usize;
            let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
            vector[bucket] += sign;
        }
        l2_normalize(&mut vector);
        Ok(vector)
    }
}
