//! Synthetic-agent simulator with analytically known net effect. Each
//! instance carries a baseline success probability and repair/regression
//! transition probabilities, which makes estimator unbiasedness, gate
//! behavior, and best-of-K selection optimism testable at desk scale.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{derive_seed, TaskInstance};
use crate::stats::{gate_decision, select_best, transition_counts, GateConfig, GateOutcome};

/// Per-instance outcome model: `baseline_success[i]` is P(b_i = 1), `p01[i]`
/// is P(z_i = 1 | b_i = 0) (repair), `p10[i]` is P(z_i = 0 | b_i = 1)
/// (regression).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticTaskModel {
    pub instances: Vec<TaskInstance>,
    pub baseline_success: Vec<f64>,
    pub p01: Vec<f64>,
    pub p10: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("model field lengths disagree: {0} instances, {1} baseline, {2} p01, {3} p10")]
    LengthMismatch(usize, usize, usize, usize),
    #[error("probability out of range: {name}[{index}] = {value}")]
    BadProbability {
        name: &'static str,
        index: usize,
        value: f64,
    },
    #[error("model must have at least one instance")]
    Empty,
    #[error("csv export failed: {0}")]
    Export(#[from] csv::Error),
    #[error("summary export failed: {0}")]
    Io(#[from] std::io::Error),
}

impl SyntheticTaskModel {
    pub fn new(
        instances: Vec<TaskInstance>,
        baseline_success: Vec<f64>,
        p01: Vec<f64>,
        p10: Vec<f64>,
        seed: u64,
    ) -> Result<Self, SimError> {
        let model = Self {
            instances,
            baseline_success,
            p01,
            p10,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    /// A model where every instance shares the same three probabilities.
    pub fn uniform(m: usize, baseline: f64, p01: f64, p10: f64, seed: u64) -> Result<Self, SimError> {
        let instances = (1..=m)
            .map(|i| TaskInstance::new(format!("sim{i:04}"), format!("synthetic instance {i}")))
            .collect();
        Self::new(instances, vec![baseline; m], vec![p01; m], vec![p10; m], seed)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.instances.len();
        if n == 0 {
            return Err(SimError::Empty);
        }
        if self.baseline_success.len() != n || self.p01.len() != n || self.p10.len() != n {
            return Err(SimError::LengthMismatch(
                n,
                self.baseline_success.len(),
                self.p01.len(),
                self.p10.len(),
            ));
        }
        for (name, values) in [
            ("baseline_success", &self.baseline_success),
            ("p01", &self.p01),
            ("p10", &self.p10),
        ] {
            for (index, &value) in values.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(SimError::BadProbability { name, index, value });
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.instances.len()
    }

    fn sample_baseline(&self, rng: &mut impl Rng) -> Vec<bool> {
        self.baseline_success
            .iter()
            .map(|&p| rng.gen_bool(p))
            .collect()
    }

    fn sample_intervention(&self, b: &[bool], rng: &mut impl Rng) -> Vec<bool> {
        b.iter()
            .enumerate()
            .map(|(i, &bi)| {
                if bi {
                    !rng.gen_bool(self.p10[i])
                } else {
                    rng.gen_bool(self.p01[i])
                }
            })
            .collect()
    }
}

/// Closed-form net effect: mean over instances of
/// `(1 − baseline)·p01 − baseline·p10`.
pub fn analytic_delta(model: &SyntheticTaskModel) -> f64 {
    let n = model.m() as f64;
    model
        .baseline_success
        .iter()
        .zip(&model.p01)
        .zip(&model.p10)
        .map(|((&beta, &p01), &p10)| (1.0 - beta) * p01 - beta * p10)
        .sum::<f64>()
        / n
}

/// Exact E[Δ̂] by depth-first enumeration of every joint (b, z)
/// configuration; feasible for small models and used as the oracle against
/// `analytic_delta`.
pub fn enumerate_expected_delta(model: &SyntheticTaskModel) -> f64 {
    let n = model.m();
    assert!(n <= 12, "enumeration is exponential; use small models");
    fn walk(model: &SyntheticTaskModel, i: usize, prob: f64, gain: i64) -> f64 {
        if prob == 0.0 {
            return 0.0;
        }
        if i == model.m() {
            return prob * gain as f64 / model.m() as f64;
        }
        let beta = model.baseline_success[i];
        let (p01, p10) = (model.p01[i], model.p10[i]);
        // (b, z) ∈ {(0,0), (0,1), (1,0), (1,1)} with transition weights.
        walk(model, i + 1, prob * (1.0 - beta) * (1.0 - p01), gain)
            + walk(model, i + 1, prob * (1.0 - beta) * p01, gain + 1)
            + walk(model, i + 1, prob * beta * p10, gain - 1)
            + walk(model, i + 1, prob * beta * (1.0 - p10), gain)
    }
    walk(model, 0, 1.0, 0)
}

/// One simulated verification pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    pub delta_hat: f64,
    pub net_gain: i64,
    pub gate: GateOutcome,
}

/// Monte Carlo distribution of the paired verification statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationSimulation {
    pub m: usize,
    pub trials: u64,
    pub mean_delta_hat: f64,
    /// Population variance of Δ̂ across trials.
    pub variance_delta_hat: f64,
    pub gate_activation_rate: f64,
    pub rows: Vec<TrialRow>,
}

fn run_trial(model: &SyntheticTaskModel, trial: u64, cfg: &GateConfig) -> TrialRow {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(model.seed, "sim-trial", &trial.to_string()));
    let b = model.sample_baseline(&mut rng);
    let z = model.sample_intervention(&b, &mut rng);
    let stats = transition_counts(&b, &z).expect("equal-length binary vectors");
    TrialRow {
        trial,
        delta_hat: stats.delta_hat,
        net_gain: stats.net_gain,
        gate: gate_decision(&stats, cfg),
    }
}

/// Samples `trials` independent verification passes of the same fixed skill.
/// Per-trial RNG streams derive from (model seed, trial index), so results
/// are reproducible bit-for-bit regardless of scheduling.
pub fn simulate_verification(
    model: &SyntheticTaskModel,
    trials: u64,
    cfg: &GateConfig,
) -> VerificationSimulation {
    assert!(trials >= 1, "at least one trial");
    let rows: Vec<TrialRow> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(model, t, cfg))
        .collect();
    let n = trials as f64;
    let mean = rows.iter().map(|r| r.delta_hat).sum::<f64>() / n;
    let variance = rows
        .iter()
        .map(|r| (r.delta_hat - mean).powi(2))
        .sum::<f64>()
        / n;
    let active = rows
        .iter()
        .filter(|r| r.gate == GateOutcome::Active)
        .count() as f64;
    VerificationSimulation {
        m: model.m(),
        trials,
        mean_delta_hat: mean,
        variance_delta_hat: variance,
        gate_activation_rate: active / n,
        rows,
    }
}

/// Measured best-of-K selection optimism.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectionBiasReport {
    pub k: u32,
    pub trials: u64,
    pub analytic_delta: f64,
    pub mean_selected_delta_hat: f64,
    /// mean selected Δ̂ minus the analytic Δ.
    pub optimism_gap: f64,
}

/// Simulates K candidate verifications per trial — one shared baseline draw,
/// K independent intervention draws, as in a real run where the no-skill
/// outcomes are cached — applies earliest-round-wins selection on net gain,
/// and reports how optimistic the selected Δ̂ is relative to the analytic Δ.
pub fn selection_bias_probe(
    model: &SyntheticTaskModel,
    k: u32,
    trials: u64,
) -> SelectionBiasReport {
    assert!(k >= 1, "at least one candidate");
    assert!(trials >= 1, "at least one trial");
    let selected: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut base_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                model.seed,
                "sim-select-baseline",
                &t.to_string(),
            ));
            let b = model.sample_baseline(&mut base_rng);
            let candidates: Vec<(u32, f64, i64)> = (1..=k)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        model.seed,
                        "sim-select-candidate",
                        &format!("{t}/{r}"),
                    ));
                    let z = model.sample_intervention(&b, &mut rng);
                    let stats = transition_counts(&b, &z).expect("equal-length vectors");
                    (r, stats.delta_hat, stats.net_gain)
                })
                .collect();
            let gains: Vec<(u32, i64)> = candidates.iter().map(|&(r, _, g)| (r, g)).collect();
            let best = select_best(&gains).expect("k >= 1");
            candidates
                .iter()
                .find(|&&(r, _, _)| r == best)
                .expect("selected round exists")
                .1
        })
        .collect();
    let mean = selected.iter().sum::<f64>() / trials as f64;
    let delta = analytic_delta(model);
    SelectionBiasReport {
        k,
        trials,
        analytic_delta: delta,
        mean_selected_delta_hat: mean,
        optimism_gap: mean - delta,
    }
}

/// Writes one row per trial: `trial, delta_hat, net_gain, gate`.
pub fn write_trials_csv(path: &Path, sim: &VerificationSimulation) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["trial", "delta_hat", "net_gain", "gate"])?;
    for row in &sim.rows {
        writer.write_record([
            row.trial.to_string(),
            format!("{}", row.delta_hat),
            row.net_gain.to_string(),
            match row.gate {
                GateOutcome::Active => "active".to_string(),
                GateOutcome::Deprecated => "deprecated".to_string(),
            },
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes the distribution summary (without per-trial rows) as JSON.
pub fn write_summary_json(path: &Path, sim: &VerificationSimulation) -> Result<(), SimError> {
    #[derive(Serialize)]
    struct Summary<'a> {
        m: usize,
        trials: u64,
        mean_delta_hat: f64,
        variance_delta_hat: f64,
        gate_activation_rate: f64,
        seed_note: &'a str,
    }
    let summary = Summary {
        m: sim.m,
        trials: sim.trials,
        mean_delta_hat: sim.mean_delta_hat,
        variance_delta_hat: sim.variance_delta_hat,
        gate_activation_rate: sim.gate_activation_rate,
        seed_note: "per-trial streams derived from (seed, trial index)",
    };
    std::fs::write(path, serde_json::to_string_pretty(&summary).expect("serializable"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_mixture_delta() {
        // 20 sure failures with p01 = 0.3 plus 20 sure successes with
        // p10 = 0.1: Δ = (20·0.3 − 20·0.1) / 40 = 0.1.
        let mut baseline = vec![0.0; 20];
        baseline.extend(vec![1.0; 20]);
        let mut p01 = vec![0.3; 20];
        p01.extend(vec![0.0; 20]);
        let mut p10 = vec![0.0; 20];
        p10.extend(vec![0.1; 20]);
        let instances = (0..40)
            .map(|i| TaskInstance::new(format!("x{i:02}"), "p"))
            .collect();
        let model = SyntheticTaskModel::new(instances, baseline, p01, p10, 42).unwrap();
        assert!((analytic_delta(&model) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn degenerate_deltas() {
        let inert = SyntheticTaskModel::uniform(10, 0.5, 0.0, 0.0, 1).unwrap();
        assert_eq!(analytic_delta(&inert), 0.0);
        let perfect = SyntheticTaskModel::uniform(10, 0.0, 1.0, 0.0, 1).unwrap();
        assert_eq!(analytic_delta(&perfect), 1.0);
    }

    #[test]
    fn bad_models_are_rejected() {
        assert!(matches!(
            SyntheticTaskModel::uniform(0, 0.5, 0.1, 0.1, 1),
            Err(SimError::Empty)
        ));
        assert!(matches!(
            SyntheticTaskModel::uniform(3, 1.5, 0.1, 0.1, 1),
            Err(SimError::BadProbability { .. })
        ));
        let instances = vec![TaskInstance::new("a", "p")];
        assert!(matches!(
            SyntheticTaskModel::new(instances, vec![0.5, 0.5], vec![0.1], vec![0.1], 1),
            Err(SimError::LengthMismatch(..))
        ));
    }

    #[test]
    fn enumeration_oracle_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..20 {
            let n = rng.gen_range(1..=6);
            let instances = (0..n)
                .map(|i| TaskInstance::new(format!("e{case}-{i}"), "p"))
                .collect();
            let baseline: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p01: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p10: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let model = SyntheticTaskModel::new(instances, baseline, p01, p10, 9).unwrap();
            let exact = enumerate_expected_delta(&model);
            let closed = analytic_delta(&model);
            assert!(
                (exact - closed).abs() < 1e-9,
                "case {case}: enumeration {exact} vs closed form {closed}"
            );
        }
    }

    #[test]
    fn twelve_instance_enumeration_still_agrees() {
        let model = SyntheticTaskModel::uniform(12, 0.4, 0.35, 0.15, 5).unwrap();
        let exact = enumerate_expected_delta(&model);
        assert!((exact - analytic_delta(&model)).abs() < 1e-9);
    }

    #[test]
    fn simulation_is_bit_for_bit_reproducible() {
        let model = SyntheticTaskModel::uniform(20, 0.5, 0.4, 0.2, 77).unwrap();
        let a = simulate_verification(&model, 200, &GateConfig::default());
        let b = simulate_verification(&model, 200, &GateConfig::default());
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.mean_delta_hat, b.mean_delta_hat);
    }

    #[test]
    fn deterministic_model_has_zero_variance() {
        let model = SyntheticTaskModel::uniform(15, 0.0, 1.0, 0.0, 4).unwrap();
        let sim = simulate_verification(&model, 100, &GateConfig::default());
        assert_eq!(sim.variance_delta_hat, 0.0);
        assert_eq!(sim.mean_delta_hat, 1.0);
        assert_eq!(sim.gate_activation_rate, 1.0);
    }

    #[test]
    fn estimator_mean_tracks_analytic_delta() {
        // Δ = 0.5·0.3 − 0.5·0.1 = 0.1 at m = 40.
        let model = SyntheticTaskModel::uniform(40, 0.5, 0.3, 0.1, 42).unwrap();
        let sim = simulate_verification(&model, 10_000, &GateConfig::default());
        assert!(
            (sim.mean_delta_hat - 0.1).abs() < 0.005,
            "mean {} strays from 0.1",
            sim.mean_delta_hat
        );
    }

    #[test]
    fn convergence_is_consistent_with_root_n() {
        let model = SyntheticTaskModel::uniform(30, 0.5, 0.3, 0.1, 11).unwrap();
        let delta = analytic_delta(&model);
        for trials in [1_000u64, 10_000] {
            let sim = simulate_verification(&model, trials, &GateConfig::default());
            let standard_error = (sim.variance_delta_hat / trials as f64).sqrt();
            assert!(
                (sim.mean_delta_hat - delta).abs() < 5.0 * standard_error,
                "{trials} trials: |{} - {delta}| exceeds 5 standard errors",
                sim.mean_delta_hat
            );
        }
    }

    #[test]
    fn null_model_rarely_activates_the_gate() {
        // Δ = 0: repairs and regressions are equally likely (5% of instances
        // each way per pass). Measured activation rate under the default gate
        // at m = 30 is ≈ 0.19 and must stay below 0.25.
        let model = SyntheticTaskModel::uniform(30, 0.5, 0.1, 0.1, 123).unwrap();
        let sim = simulate_verification(&model, 5_000, &GateConfig::default());
        assert!(
            sim.gate_activation_rate < 0.25,
            "null activation rate {} too high",
            sim.gate_activation_rate
        );
    }

    #[test]
    fn selection_probe_measures_optimism() {
        // Zero-variance model: all candidates identical, gap exactly 0.
        let fixed = SyntheticTaskModel::uniform(20, 0.0, 1.0, 0.0, 6).unwrap();
        let report = selection_bias_probe(&fixed, 8, 200);
        assert_eq!(report.optimism_gap, 0.0);

        // K = 1: no selection, gap within Monte Carlo noise.
        let noisy = SyntheticTaskModel::uniform(30, 0.5, 0.2, 0.2, 8).unwrap();
        let single = selection_bias_probe(&noisy, 1, 4_000);
        assert!(single.optimism_gap.abs() < 0.01, "gap {}", single.optimism_gap);

        // K = 8 on a Δ = 0 model: optimism is strictly positive.
        let probe = selection_bias_probe(&noisy, 8, 2_000);
        assert!(probe.optimism_gap > 0.0, "gap {}", probe.optimism_gap);
    }

    #[test]
    fn exports_round_trip() {
        let model = SyntheticTaskModel::uniform(10, 0.5, 0.4, 0.1, 2).unwrap();
        let sim = simulate_verification(&model, 25, &GateConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("trials.csv");
        let json_path = dir.path().join("summary.json");
        write_trials_csv(&csv_path, &sim).unwrap();
        write_summary_json(&json_path, &sim).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("trial,delta_hat,net_gain,gate"));
        assert_eq!(lines.count(), 25);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(summary["trials"], 25);
        assert!(summary["mean_delta_hat"].is_f64());
    }
}
