//! Paired interventional calculus over binary outcome vectors.
//!
//! Everything in this module is a pure function of its inputs: transition
//! counts, net gain, the empirical effect, the deployment gate, feedback
//! partitions, best-of-K selection, and the baseline-success guard subset.
//! Outcome vectors are index-aligned; callers keep them in ascending
//! instance-id order so index sets translate directly to instance ids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("paired outcome vectors differ in length: baseline {baseline}, skill {skill}")]
    LengthMismatch { baseline: usize, skill: usize },
    #[error("paired outcome vectors are empty")]
    Empty,
}

/// Transition counts of a candidate skill against the cached baseline on a
/// verification subset of size `m`.
///
/// `n01` counts repairs (baseline 0, skill 1), `n10` counts regressions
/// (baseline 1, skill 0); `net_gain = n01 - n10` and
/// `delta_hat = net_gain / m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedStats {
    pub m: usize,
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
    pub net_gain: i64,
    pub delta_hat: f64,
}

impl PairedStats {
    pub fn repairs(&self) -> u64 {
        self.n01
    }

    pub fn regressions(&self) -> u64 {
        self.n10
    }
}

/// Deployment-gate parameters: an absolute minimum number of net repairs and
/// a relative minimum as a fraction of the verification subset size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub g_abs: u64,
    pub g_rel: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            g_abs: 2,
            g_rel: 0.05,
        }
    }
}

/// Gate verdict for a candidate skill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateOutcome {
    Active,
    Deprecated,
}

/// Index partition of a verification run: repaired, regressed, and still
/// failing instances. Instances correct on both sides appear in none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackPartition {
    pub repair: Vec<usize>,
    pub regress: Vec<usize>,
    pub fail: Vec<usize>,
}

impl FeedbackPartition {
    pub fn is_empty(&self) -> bool {
        self.repair.is_empty() && self.regress.is_empty() && self.fail.is_empty()
    }
}

/// Baseline-success guard result: which verification indices were checked and
/// which of them the candidate regressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardReport {
    pub checked: Vec<usize>,
    pub regressions: Vec<usize>,
}

fn check_lengths(baseline: &[bool], skill: &[bool]) -> Result<(), StatsError> {
    if baseline.len() != skill.len() {
        return Err(StatsError::LengthMismatch {
            baseline: baseline.len(),
            skill: skill.len(),
        });
    }
    if baseline.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(())
}

/// Counts the four baseline/skill outcome transitions in one pass.
pub fn transition_counts(baseline: &[bool], skill: &[bool]) -> Result<PairedStats, StatsError> {
    check_lengths(baseline, skill)?;
    let (mut n00, mut n01, mut n10, mut n11) = (0u64, 0u64, 0u64, 0u64);
    for (&b, &z) in baseline.iter().zip(skill.iter()) {
        match (b, z) {
            (false, false) => n00 += 1,
            (false, true) => n01 += 1,
            (true, false) => n10 += 1,
            (true, true) => n11 += 1,
        }
    }
    let m = baseline.len();
    let net_gain = n01 as i64 - n10 as i64;
    Ok(PairedStats {
        m,
        n00,
        n01,
        n10,
        n11,
        net_gain,
        delta_hat: net_gain as f64 / m as f64,
    })
}

/// Gate threshold `max{g_abs, ceil(g_rel * m), 1}`.
///
/// The ceiling is computed in scaled integer arithmetic (g_rel quantized to
/// nine decimal places) so thresholds are exact for human-written rates like
/// 0.05 instead of drifting with float rounding.
pub fn gate_threshold(m: usize, cfg: &GateConfig) -> u64 {
    const SCALE: u128 = 1_000_000_000;
    let rel_scaled = (cfg.g_rel * SCALE as f64).round().max(0.0) as u128;
    let rel_ceil = (rel_scaled * m as u128).div_ceil(SCALE) as u64;
    cfg.g_abs.max(rel_ceil).max(1)
}

/// A candidate is active only if its net gain meets the gate threshold.
pub fn gate_decision(stats: &PairedStats, cfg: &GateConfig) -> GateOutcome {
    if stats.net_gain >= gate_threshold(stats.m, cfg) as i64 {
        GateOutcome::Active
    } else {
        GateOutcome::Deprecated
    }
}

/// Splits verification indices into repairs, regressions, and unresolved
/// failures.
pub fn partition_feedback(
    baseline: &[bool],
    skill: &[bool],
) -> Result<FeedbackPartition, StatsError> {
    check_lengths(baseline, skill)?;
    let mut partition = FeedbackPartition {
        repair: Vec::new(),
        regress: Vec::new(),
        fail: Vec::new(),
    };
    for (j, (&b, &z)) in baseline.iter().zip(skill.iter()).enumerate() {
        match (b, z) {
            (false, true) => partition.repair.push(j),
            (true, false) => partition.regress.push(j),
            (false, false) => partition.fail.push(j),
            (true, true) => {}
        }
    }
    Ok(partition)
}

/// Best-of-K selection: the round with the largest net gain, ties broken
/// toward the earliest round.
pub fn select_best(rounds: &[(u32, i64)]) -> Option<u32> {
    let mut best: Option<(u32, i64)> = None;
    for &(round, gain) in rounds {
        best = match best {
            None => Some((round, gain)),
            Some((br, bg)) if gain > bg || (gain == bg && round < br) => Some((round, gain)),
            other => other,
        };
    }
    best.map(|(round, _)| round)
}

/// Indices of up to `cap` baseline successes, lowest indices first.
///
/// With id-ordered outcome vectors this is the "up to `cap` lowest-id
/// baseline successes" guard subset.
pub fn guard_subset(baseline: &[bool], cap: usize) -> Vec<usize> {
    baseline
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(j, _)| j)
        .take(cap)
        .collect()
}

/// Restricts regression reporting to the guard subset.
pub fn guard_report(
    baseline: &[bool],
    skill: &[bool],
    cap: usize,
) -> Result<GuardReport, StatsError> {
    check_lengths(baseline, skill)?;
    let checked = guard_subset(baseline, cap);
    let regressions = checked.iter().copied().filter(|&j| !skill[j]).collect();
    Ok(GuardReport {
        checked,
        regressions,
    })
}
