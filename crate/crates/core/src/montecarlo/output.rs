//! CSV and JSON emitters for experiment results.
//!
//! Sweep CSV columns:
//!
//! | column        | meaning                                            |
//! |---------------|----------------------------------------------------|
//! | `sigma_db` / `gamma` | swept axis value                            |
//! | `estimator`   | `joint`, `bst`, `tbs` or `baseline`                |
//! | `mean_miss_m` | arithmetic mean miss distance over successful trials |
//! | `stderr_m`    | sample standard deviation / √n_ok                  |
//! | `rms_miss_m`  | root-mean-square miss distance                     |
//! | `crlb_m`      | joint CRLB on the RMS miss distance                |
//! | `n_ok`        | successful trials                                  |
//! | `n_failed`    | failed trials                                      |
//!
//! Missing values (no successful trials, singular Fisher matrix) are empty
//! fields. Floats use Rust's shortest round-trip formatting.

use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::sweep::{CepMap, SweepConfig, SweepResult};
use crate::estimators::{EstimatorKind, SearchGrid};
use crate::model::{Scenario, ScenarioFile};

pub const CEP_CSV_HEADER: &str =
    "sigma_db,gamma,cep_m,cep_stderr_m,threshold_m,below_threshold,n_ok,n_failed";

/// Provenance attached to every JSON result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub n_trials: usize,
    /// SHA-256 of the normalized scenario file.
    pub scenario_hash: String,
    pub grid: SearchGrid,
    pub estimators: Vec<EstimatorKind>,
    pub crlb_mode: crate::crlb::BoundMode,
    pub code_version: &'static str,
    /// Wall-clock stamp; excluded from reproducibility comparisons.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix_s: Option<u64>,
}

impl RunMetadata {
    pub(crate) fn new(template: &Scenario, config: &SweepConfig) -> Self {
        Self {
            seed: config.seed,
            n_trials: config.n_trials,
            scenario_hash: scenario_hash(template),
            grid: config.grid.clone(),
            estimators: config.estimators.clone(),
            crlb_mode: config.bound_mode(),
            code_version: env!("CARGO_PKG_VERSION"),
            generated_at_unix_s: None,
        }
    }
}

pub fn scenario_hash(scenario: &Scenario) -> String {
    let text = ScenarioFile::from_scenario(scenario).to_json();
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = format!(
        "{},estimator,mean_miss_m,stderr_m,rms_miss_m,crlb_m,n_ok,n_failed\n",
        result.axis.column()
    );
    for p in &result.points {
        for e in &p.estimators {
            let s = &e.stats;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.axis_value,
                e.estimator,
                opt(s.mean),
                opt(s.stderr),
                opt(s.rms),
                opt(p.crlb_m),
                s.n_ok,
                s.n_failed
            )
            .expect("write to string");
        }
    }
    out
}

pub fn cep_csv(map: &CepMap) -> String {
    let mut out = format!("{CEP_CSV_HEADER}\n");
    for c in &map.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.sigma_db,
            c.gamma,
            opt(c.cep_m),
            opt(c.cep_stderr_m),
            map.threshold_m,
            c.below_threshold,
            c.n_ok,
            c.n_failed
        )
        .expect("write to string");
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    s
}
