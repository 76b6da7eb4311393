//! Seeded Monte Carlo trials, miss-distance statistics, and the σ-sweep,
//! γ-sweep and CEP-map experiments.
//!
//! Trial `t` of a batch draws its measurements from
//! [`child_seed`]`(master_seed, t)`. The seed does not depend on σ, γ, the
//! estimator or the axis point, so every cell of an experiment sees the same
//! standard-normal draws for trial `t` and adding cells never shifts the
//! noise of existing ones.

mod output;
mod sweep;

pub use output::{cep_csv, scenario_hash, sweep_csv, to_json, RunMetadata, CEP_CSV_HEADER};
pub use sweep::{
    cep_map, sweep_gamma, sweep_sigma, CepCell, CepMap, EstimatorStats, SweepAxis, SweepConfig,
    SweepPoint, SweepResult,
};

use serde::Serialize;

use crate::error::Result;
use crate::estimators::{EstimatorKind, Locator, SearchGrid};
use crate::exec::Execution;
use crate::model::{synthesize, Scenario};

/// SplitMix64 output function.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of a batch: `splitmix64(splitmix64(master) ^ trial)`.
pub fn child_seed(master_seed: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ trial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialBatch {
    pub scenario: Scenario,
    pub estimator: EstimatorKind,
    pub grid: SearchGrid,
    pub n_trials: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

/// Per-trial miss distances of one estimator, in trial order. Failed trials
/// are listed separately and excluded from `distances`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchResult {
    pub estimator: EstimatorKind,
    pub distances: Vec<f64>,
    pub failures: Vec<TrialFailure>,
}

impl BatchResult {
    pub fn n_failed(&self) -> usize {
        self.failures.len()
    }

    pub fn stats(&self) -> MissStats {
        MissStats::from_distances(&self.distances, self.n_failed())
    }
}

/// Summary of a set of miss distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MissStats {
    pub n_ok: usize,
    pub n_failed: usize,
    /// Arithmetic mean of the miss distances.
    pub mean: Option<f64>,
    /// Sample standard deviation over √n.
    pub stderr: Option<f64>,
    /// Root-mean-square miss distance, comparable with the CRLB.
    pub rms: Option<f64>,
}

impl MissStats {
    pub fn from_distances(distances: &[f64], n_failed: usize) -> Self {
        let n = distances.len();
        if n == 0 {
            return Self {
                n_ok: 0,
                n_failed,
                mean: None,
                stderr: None,
                rms: None,
            };
        }
        let nf = n as f64;
        let mean = distances.iter().sum::<f64>() / nf;
        let stderr = if n > 1 {
            let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            (var / nf).sqrt()
        } else {
            0.0
        };
        let rms = (distances.iter().map(|d| d * d).sum::<f64>() / nf).sqrt();
        Self {
            n_ok: n,
            n_failed,
            mean: Some(mean),
            stderr: Some(stderr),
            rms: Some(rms),
        }
    }
}

/// Percentile with linear interpolation between closest ranks
/// (`h = (n − 1) p`). `None` for empty input.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(percentile_sorted(&sorted, p))
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Run `n_trials` trials, evaluating every estimator in `estimators` on the
/// same measurements. Trials run under `execution`; each search inside a
/// trial is serial.
pub(crate) fn run_trials(
    scenario: &Scenario,
    grid: &SearchGrid,
    estimators: &[EstimatorKind],
    n_trials: usize,
    master_seed: u64,
    execution: Execution,
) -> Vec<BatchResult> {
    let mut locator = Locator::with_execution(scenario.knowledge(), grid.clone(), execution);
    locator.set_execution(Execution::Serial);
    let locator = &locator;

    let outcomes: Vec<Vec<std::result::Result<f64, String>>> = execution.map(n_trials, |t| {
        match synthesize(scenario, child_seed(master_seed, t as u64)) {
            Ok(rss) => estimators
                .iter()
                .map(|&kind| {
                    locator
                        .estimate(kind, &rss)
                        .map(|r| r.u1_hat.distance(scenario.true_u1))
                        .map_err(|e| e.to_string())
                })
                .collect(),
            Err(e) => vec![Err(e.to_string()); estimators.len()],
        }
    });

    estimators
        .iter()
        .enumerate()
        .map(|(i, &estimator)| {
            let mut distances = Vec::with_capacity(n_trials);
            let mut failures = Vec::new();
            for (trial, outcome) in outcomes.iter().enumerate() {
                match &outcome[i] {
                    Ok(d) => distances.push(*d),
                    Err(error) => failures.push(TrialFailure {
                        trial,
                        error: error.clone(),
                    }),
                }
            }
            BatchResult {
                estimator,
                distances,
                failures,
            }
        })
        .collect()
}

/// Miss distances `‖û1 − u1‖` of every trial in the batch.
pub fn run_batch(batch: &TrialBatch, execution: Execution) -> Result<BatchResult> {
    if batch.n_trials == 0 {
        return Err(crate::error::Error::invalid(
            "trials",
            "at least one trial is required",
        ));
    }
    batch.scenario.validate()?;
    Ok(run_trials(
        &batch.scenario,
        &batch.grid,
        &[batch.estimator],
        batch.n_trials,
        batch.master_seed,
        execution,
    )
    .pop()
    .expect("one estimator"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hexagon_scenario, Vec3};

    #[test]
    fn child_seeds_are_distinct_and_stable() {
        let seeds: std::collections::HashSet<_> = (0..10_000).map(|t| child_seed(7, t)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_eq!(child_seed(7, 3), child_seed(7, 3));
        assert_ne!(child_seed(7, 3), child_seed(8, 3));
    }

    #[test]
    fn percentile_interpolates_between_ranks() {
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.5), Some(2.5));
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5), Some(2.0));
        assert_eq!(percentile(&[5.0], 0.5), Some(5.0));
        assert_eq!(percentile(&[0.0, 10.0], 0.25), Some(2.5));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn stats_use_sample_std() {
        let s = MissStats::from_distances(&[1.0, 2.0, 3.0, 4.0], 1);
        assert_eq!(s.n_ok, 4);
        assert_eq!(s.n_failed, 1);
        assert_eq!(s.mean, Some(2.5));
        let expected_se = (1.25f64 * 4.0 / 3.0).sqrt() / 2.0;
        assert!((s.stderr.unwrap() - expected_se).abs() < 1e-15);
        assert!((s.rms.unwrap() - 7.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(MissStats::from_distances(&[], 3).mean, None);
    }

    #[test]
    fn noiseless_batch_has_zero_miss() {
        let batch = TrialBatch {
            scenario: hexagon_scenario().with_sigma(0.0).unwrap(),
            estimator: EstimatorKind::Joint,
            grid: SearchGrid::planar(Vec3::new(0.0, 0.0, 100.0), 100.0, 10.0).unwrap(),
            n_trials: 8,
            master_seed: 1,
        };
        let r = run_batch(&batch, Execution::Parallel).unwrap();
        assert_eq!(r.distances, vec![0.0; 8]);
        assert_eq!(r.n_failed(), 0);
    }

    #[test]
    fn failed_trials_are_counted() {
        // Grid collapsed onto a base station: every search is infeasible.
        let batch = TrialBatch {
            scenario: hexagon_scenario(),
            estimator: EstimatorKind::Baseline,
            grid: SearchGrid::planar(Vec3::new(1000.0, 0.0, 20.0), 0.2, 0.1).unwrap(),
            n_trials: 3,
            master_seed: 1,
        };
        let r = run_batch(&batch, Execution::Serial).unwrap();
        assert!(r.distances.is_empty());
        assert_eq!(r.n_failed(), 3);
        assert_eq!(r.stats().n_failed, 3);
        assert_eq!(r.failures[2].trial, 2);
    }

    #[test]
    fn batches_repeat_exactly() {
        let batch = TrialBatch {
            scenario: hexagon_scenario(),
            estimator: EstimatorKind::Tbs,
            grid: SearchGrid::planar(Vec3::new(0.0, 0.0, 100.0), 300.0, 10.0).unwrap(),
            n_trials: 16,
            master_seed: 99,
        };
        let a = run_batch(&batch, Execution::Parallel).unwrap();
        let b = run_batch(&batch, Execution::Serial).unwrap();
        assert_eq!(a, b);
    }
}
