//! Seeded induction/verification split of a task pool.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::instance::{DatasetSplit, TaskInstance};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("pool of {pool} instances cannot cover {needed} verification instances plus one induction instance")]
    PoolTooSmall { pool: usize, needed: usize },
    #[error("duplicate instance id in pool: {id}")]
    DuplicateId { id: String },
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Partitions `pool` into induction and verification subsets.
///
/// The pool is sorted by id, shuffled with a seeded portable PRNG, and the
/// verification side sized at `max(round((1 - ratio) * N), min_ver)` — so the
/// partition is a function of the pool ids and the seed only. Both sides are
/// returned in ascending id order, which downstream code relies on when
/// aligning outcome vectors.
pub fn split_dataset(
    pool: &[TaskInstance],
    ratio: f64,
    min_ver: usize,
    seed: u64,
) -> Result<DatasetSplit, SplitError> {
    let mut seen = HashSet::new();
    for instance in pool {
        if !seen.insert(instance.id.as_str()) {
            return Err(SplitError::DuplicateId {
                id: instance.id.clone(),
            });
        }
    }

    let n = pool.len();
    let n_ver = round_half_up((1.0 - ratio) * n as f64).max(min_ver);
    if n_ver >= n {
        return Err(SplitError::PoolTooSmall {
            pool: n,
            needed: n_ver,
        });
    }

    let mut shuffled: Vec<TaskInstance> = pool.to_vec();
    shuffled.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let mut induction: Vec<TaskInstance> = shuffled.drain(..n - n_ver).collect();
    let mut verification = shuffled;
    induction.sort_by(|a, b| a.id.cmp(&b.id));
    verification.sort_by(|a, b| a.id.cmp(&b.id));

    Ok(DatasetSplit {
        induction,
        verification,
        seed,
    })
}
