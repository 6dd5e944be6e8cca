//! Deterministic per-call seed derivation.
//!
//! Every randomized operation (evaluator sampling, paired rollouts, simulator
//! trials) draws from a child seed derived from the run's root seed plus a
//! context label and an instance id. Derived seeds make parallel execution
//! order-independent: no shared RNG stream exists to race on.

use sha2::{Digest, Sha256};

/// Derives a child seed as the first eight little-endian bytes of
/// `sha256(root | 0x1f | context | 0x1f | id)`.
pub fn derive_seed(root: u64, context: &str, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(context.as_bytes());
    hasher.update([0x1f]);
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_across_calls() {
        assert_eq!(
            derive_seed(42, "verify/r1", "t017"),
            derive_seed(42, "verify/r1", "t017")
        );
    }

    #[test]
    fn distinct_inputs_give_distinct_seeds() {
        let base = derive_seed(42, "verify/r1", "t017");
        assert_ne!(base, derive_seed(43, "verify/r1", "t017"));
        assert_ne!(base, derive_seed(42, "verify/r2", "t017"));
        assert_ne!(base, derive_seed(42, "verify/r1", "t018"));
    }

    #[test]
    fn separator_prevents_field_smearing() {
        assert_ne!(derive_seed(1, "ab", "c"), derive_seed(1, "a", "bc"));
    }
}
