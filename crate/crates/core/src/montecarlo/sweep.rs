use serde::Serialize;

use super::{percentile_sorted, run_trials, MissStats, RunMetadata};
use crate::crlb::{crlb_report, BoundMode};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, SearchGrid};
use crate::exec::Execution;
use crate::model::Scenario;

/// Shared settings for every experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: SearchGrid,
    pub estimators: Vec<EstimatorKind>,
    pub n_trials: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl SweepConfig {
    /// All four estimators, the standard ±1000 m AOI at the scenario altitude, 1000 trials.
    pub fn standard(scenario: &Scenario) -> Self {
        Self {
            grid: SearchGrid::standard_aoi(scenario.true_u1.z),
            estimators: EstimatorKind::ALL.to_vec(),
            n_trials: 1000,
            seed: 0,
            execution: Execution::Parallel,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::invalid("trials", "at least one trial is required"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid(
                "estimator",
                "at least one estimator is required",
            ));
        }
        Ok(())
    }

    pub(crate) fn bound_mode(&self) -> BoundMode {
        if self.grid.is_planar() {
            BoundMode::Planar
        } else {
            BoundMode::Volumetric
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Sigma,
    Gamma,
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Sigma => "sigma_db",
            SweepAxis::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorStats {
    pub estimator: EstimatorKind,
    #[serde(flatten)]
    pub stats: MissStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub sigma_db: f64,
    pub gamma: f64,
    /// Joint CRLB on the RMS miss distance; `None` when `G` is singular.
    pub crlb_m: Option<f64>,
    pub estimators: Vec<EstimatorStats>,
}

impl SweepPoint {
    pub fn stats(&self, kind: EstimatorKind) -> Option<&MissStats> {
        self.estimators
            .iter()
            .find(|e| e.estimator == kind)
            .map(|e| &e.stats)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub metadata: RunMetadata,
}

impl SweepResult {
    /// True when no trial in any cell succeeded.
    pub fn total_failure(&self) -> bool {
        self.points
            .iter()
            .flat_map(|p| &p.estimators)
            .all(|e| e.stats.n_ok == 0)
    }
}

fn sweep(
    template: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    config: &SweepConfig,
) -> Result<SweepResult> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::EmptyInput("sweep values"));
    }
    let scenarios = values
        .iter()
        .map(|&v| match axis {
            SweepAxis::Sigma if v > 0.0 => template.with_sigma(v),
            SweepAxis::Sigma => Err(Error::invalid(
                "sigma_db",
                format!("sweep values must be positive, got {v}"),
            )),
            SweepAxis::Gamma => template.with_gamma(v),
        })
        .collect::<Result<Vec<_>>>()?;

    let points = values
        .iter()
        .zip(&scenarios)
        .map(|(&axis_value, scenario)| {
            let sigma = scenario
                .noise
                .homogeneous_sigma()
                .expect("homogeneous after override");
            let results = run_trials(
                scenario,
                &config.grid,
                &config.estimators,
                config.n_trials,
                config.seed,
                config.execution,
            );
            let crlb_m = crlb_report(
                scenario.true_u1,
                &scenario.knowledge(),
                sigma,
                config.bound_mode(),
            )
            .ok()
            .map(|r| r.miss_distance_bound);
            SweepPoint {
                axis_value,
                sigma_db: sigma,
                gamma: scenario.path_loss.gamma,
                crlb_m,
                estimators: results
                    .iter()
                    .map(|r| EstimatorStats {
                        estimator: r.estimator,
                        stats: r.stats(),
                    })
                    .collect(),
            }
        })
        .collect();

    Ok(SweepResult {
        axis,
        points,
        metadata: RunMetadata::new(template, config),
    })
}

/// Average miss distance against the shadowing standard deviation, at the
/// template's path-loss exponent.
pub fn sweep_sigma(
    template: &Scenario,
    sigmas: &[f64],
    config: &SweepConfig,
) -> Result<SweepResult> {
    sweep(template, SweepAxis::Sigma, sigmas, config)
}

/// Average miss distance against the path-loss exponent, at the template's σ.
pub fn sweep_gamma(
    template: &Scenario,
    gammas: &[f64],
    config: &SweepConfig,
) -> Result<SweepResult> {
    template
        .noise
        .homogeneous_sigma()
        .ok_or_else(|| Error::invalid("sigma_db", "gamma sweep needs homogeneous noise"))?;
    sweep(template, SweepAxis::Gamma, gammas, config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CepCell {
    pub sigma_db: f64,
    pub gamma: f64,
    /// Median miss distance of the joint estimator (empirical CEP).
    pub cep_m: Option<f64>,
    /// Order-statistic standard error of the median.
    pub cep_stderr_m: Option<f64>,
    pub below_threshold: bool,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// Row-major over `(σ, γ)`: `cells[i * gammas.len() + j]` is `(sigmas[i], gammas[j])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CepMap {
    pub sigmas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub threshold_m: f64,
    pub cells: Vec<CepCell>,
    pub metadata: RunMetadata,
}

impl CepMap {
    pub fn cell(&self, sigma_index: usize, gamma_index: usize) -> &CepCell {
        &self.cells[sigma_index * self.gammas.len() + gamma_index]
    }

    pub fn total_failure(&self) -> bool {
        self.cells.iter().all(|c| c.n_ok == 0)
    }
}

/// Empirical CEP of the joint estimator at every `(σ, γ)` pair, and whether
/// it falls below `threshold_m`. σ may be zero (noiseless cell).
pub fn cep_map(
    template: &Scenario,
    sigmas: &[f64],
    gammas: &[f64],
    threshold_m: f64,
    config: &SweepConfig,
) -> Result<CepMap> {
    if sigmas.is_empty() || gammas.is_empty() {
        return Err(Error::EmptyInput("CEP ranges"));
    }
    if !(threshold_m.is_finite() && threshold_m > 0.0) {
        return Err(Error::invalid("threshold", "must be positive"));
    }
    let config = SweepConfig {
        estimators: vec![EstimatorKind::Joint],
        ..config.clone()
    };
    config.validate()?;

    let mut cells = Vec::with_capacity(sigmas.len() * gammas.len());
    for &sigma in sigmas {
        for &gamma in gammas {
            let scenario = template.with_sigma(sigma)?.with_gamma(gamma)?;
            let result = run_trials(
                &scenario,
                &config.grid,
                &config.estimators,
                config.n_trials,
                config.seed,
                config.execution,
            )
            .pop()
            .expect("joint only");
            let mut sorted = result.distances.clone();
            sorted.sort_by(f64::total_cmp);
            let (cep_m, cep_stderr_m) = if sorted.is_empty() {
                (None, None)
            } else {
                let half_width = 0.5 / (sorted.len() as f64).sqrt();
                let se = (percentile_sorted(&sorted, 0.5 + half_width)
                    - percentile_sorted(&sorted, 0.5 - half_width))
                    / 2.0;
                (Some(percentile_sorted(&sorted, 0.5)), Some(se))
            };
            cells.push(CepCell {
                sigma_db: sigma,
                gamma,
                cep_m,
                cep_stderr_m,
                below_threshold: cep_m.is_some_and(|c| c < threshold_m),
                n_ok: result.distances.len(),
                n_failed: result.n_failed(),
            });
        }
    }

    Ok(CepMap {
        sigmas: sigmas.to_vec(),
        gammas: gammas.to_vec(),
        threshold_m,
        cells,
        metadata: RunMetadata::new(template, &config),
    })
}
