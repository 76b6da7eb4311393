//! JSON scenario file schema and the built-in hexagon scenario.

use serde::{Deserialize, Serialize};

use super::{
    NoiseModel, PathLossParams, Position3D, Scenario, TrajectoryKnowledge, Vec3, DEFAULT_D_MIN,
};
use crate::error::{Error, Result};

/// Shadowing standard deviation: one value for every cell, or a full
/// `K × N` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

/// On-disk scenario description. All lengths in meters, times in seconds,
/// powers in dB/dBm. Velocities may be given as `[vx, vy]`; the vertical
/// component is then zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub base_stations: Vec<[f64; 3]>,
    pub velocities: Vec<Vec<f64>>,
    pub intervals_s: Vec<f64>,
    pub gamma: f64,
    pub d0_m: f64,
    pub alpha_dbm: f64,
    pub sigma_db: SigmaSpec,
    pub true_u1: [f64; 3],
    #[serde(default = "default_d_min")]
    pub d_min_m: f64,
}

fn default_d_min() -> f64 {
    DEFAULT_D_MIN
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("scenario", e.to_string()))
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario file serializes");
        s.push('\n');
        s
    }

    pub fn into_scenario(self) -> Result<Scenario> {
        let velocities = self
            .velocities
            .iter()
            .enumerate()
            .map(|(i, v)| match v.as_slice() {
                [x, y] => Ok(Vec3::new(*x, *y, 0.0)),
                [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
                _ => Err(Error::invalid(
                    "velocities",
                    format!("velocity {i} must have 2 or 3 components, got {}", v.len()),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        let trajectory = TrajectoryKnowledge::new(velocities, self.intervals_s)?;
        let base_stations: Vec<Position3D> =
            self.base_stations.into_iter().map(Vec3::from).collect();
        if base_stations.is_empty() {
            return Err(Error::invalid(
                "base_stations",
                "at least one base station is required",
            ));
        }
        let path_loss = PathLossParams::new(self.gamma, self.d0_m, self.alpha_dbm)?;
        let noise = match self.sigma_db {
            SigmaSpec::Scalar(s) => {
                NoiseModel::homogeneous(trajectory.len(), base_stations.len(), s)?
            }
            SigmaSpec::Matrix(rows) => NoiseModel::from_rows(&rows)?,
        };
        Scenario::with_d_min(
            base_stations,
            trajectory,
            path_loss,
            noise,
            Vec3::from(self.true_u1),
            self.d_min_m,
        )
    }

    /// Normalized file form of a scenario: 3-component velocities and a
    /// scalar σ whenever the noise is homogeneous.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let sigma_db = match scenario.noise.homogeneous_sigma() {
            Some(s) => SigmaSpec::Scalar(s),
            None => SigmaSpec::Matrix(
                scenario
                    .noise
                    .as_row_major()
                    .chunks(scenario.stations())
                    .map(<[f64]>::to_vec)
                    .collect(),
            ),
        };
        Self {
            base_stations: scenario
                .base_stations
                .iter()
                .map(|b| b.to_array())
                .collect(),
            velocities: scenario
                .trajectory
                .velocities()
                .iter()
                .map(|v| v.to_array().to_vec())
                .collect(),
            intervals_s: scenario.trajectory.intervals().to_vec(),
            gamma: scenario.path_loss.gamma,
            d0_m: scenario.path_loss.d0,
            alpha_dbm: scenario.path_loss.alpha,
            sigma_db,
            true_u1: scenario.true_u1.to_array(),
            d_min_m: scenario.d_min,
        }
    }
}

/// Hexagon scenario: six base stations 20 m high on the corners of a
/// hexagon of circumradius 1000 m centered at the origin (adjacent spacing
/// 1 km), a UAV flying at 100 m with K = 10 samples, v = [10, 0, 0] m/s and
/// Δt = 5 s, γ = 3.3, σ = 6 dB.
///
/// The starting position defaults to `[0, 0, 100]`, the AOI center. The
/// reference power is a nuisance parameter and is set to −30 dBm.
pub fn hexagon_scenario() -> Scenario {
    const RADIUS: f64 = 1000.0;
    const BS_HEIGHT: f64 = 20.0;
    const ALTITUDE: f64 = 100.0;

    let base_stations = (0..6)
        .map(|i| {
            let theta = std::f64::consts::FRAC_PI_3 * i as f64;
            Vec3::new(RADIUS * theta.cos(), RADIUS * theta.sin(), BS_HEIGHT)
        })
        .collect::<Vec<_>>();
    let trajectory = TrajectoryKnowledge::uniform(Vec3::new(10.0, 0.0, 0.0), 5.0, 10)
        .expect("constant trajectory");
    Scenario::new(
        base_stations,
        trajectory,
        PathLossParams::new(3.3, 1.0, -30.0).expect("valid path loss"),
        NoiseModel::homogeneous(10, 6, 6.0).expect("valid noise"),
        Vec3::new(0.0, 0.0, ALTITUDE),
    )
    .expect("hexagon scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hexagon_layout() {
        let s = hexagon_scenario();
        assert_eq!(s.stations(), 6);
        assert_eq!(s.samples(), 10);
        for (i, bs) in s.base_stations.iter().enumerate() {
            assert!((bs.x.hypot(bs.y) - 1000.0).abs() < 1e-9);
            assert_eq!(bs.z, 20.0);
            let next = s.base_stations[(i + 1) % 6];
            assert!((bs.distance(next) - 1000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_is_idempotent() {
        let file = ScenarioFile::from_scenario(&hexagon_scenario());
        let text = file.to_json();
        let reloaded = ScenarioFile::from_json(&text)
            .unwrap()
            .into_scenario()
            .unwrap();
        assert_eq!(reloaded, hexagon_scenario());
        assert_eq!(ScenarioFile::from_scenario(&reloaded).to_json(), text);
    }

    #[test]
    fn planar_velocities_are_zero_filled() {
        let text = r#"{
            "base_stations": [[0, 0, 20], [1000, 0, 20]],
            "velocities": [[10, 0]],
            "intervals_s": [5],
            "gamma": 3.0, "d0_m": 1, "alpha_dbm": -40,
            "sigma_db": [[1, 2], [3, 4]],
            "true_u1": [100, 100, 100]
        }"#;
        let s = ScenarioFile::from_json(text)
            .unwrap()
            .into_scenario()
            .unwrap();
        assert_eq!(s.trajectory.velocities()[0], Vec3::new(10.0, 0.0, 0.0));
        assert_eq!(s.noise.sigma(1, 0), 3.0);
        assert_eq!(s.d_min, DEFAULT_D_MIN);
        match ScenarioFile::from_scenario(&s).sigma_db {
            SigmaSpec::Matrix(rows) => assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]),
            other => panic!("expected matrix, got {other:?}"),
        }
    }

    #[test]
    fn malformed_files_name_the_field() {
        let missing = r#"{"base_stations": [[0,0,0]], "velocities": [], "intervals_s": [],
            "d0_m": 1, "alpha_dbm": 0, "sigma_db": 1, "true_u1": [5,0,0]}"#;
        let err = ScenarioFile::from_json(missing).unwrap_err().to_string();
        assert!(err.contains("gamma"), "{err}");

        let bad_gamma = missing.replace("\"d0_m\"", "\"gamma\": 9, \"d0_m\"");
        let err = ScenarioFile::from_json(&bad_gamma)
            .unwrap()
            .into_scenario()
            .unwrap_err()
            .to_string();
        assert!(err.contains("gamma"), "{err}");

        let bad_velocity = missing.replace(
            "\"velocities\": [], \"intervals_s\": []",
            "\"velocities\": [[1]], \"intervals_s\": [1]",
        );
        let bad_velocity = bad_velocity.replace("\"d0_m\"", "\"gamma\": 3, \"d0_m\"");
        let err = ScenarioFile::from_json(&bad_velocity)
            .unwrap()
            .into_scenario()
            .unwrap_err()
            .to_string();
        assert!(err.contains("velocities"), "{err}");
    }
}
