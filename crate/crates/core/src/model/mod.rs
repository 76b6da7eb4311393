//! Scenario geometry, the virtual moving base-station transform and RSS
//! measurement synthesis.
//!
//! The UAV position at time `k` is `u_k = u_1 + Δu_k`, where `Δu_k` is the
//! prefix sum of the known velocity × interval products. Equivalently, the
//! UAV can be held fixed at `u_1` while every base station `s_n` is moved to
//! the virtual position `s_n − Δu_k`. All measurement models below are
//! evaluated in that virtual frame so that every RSS sample constrains the
//! same unknown `u_1`.
//!
//! Time indices are zero-based throughout: `k = 0` is the first trajectory
//! sample, for which the displacement is exactly zero.

mod file;
mod vec3;

pub use file::{hexagon_scenario, ScenarioFile, SigmaSpec};
pub use vec3::{Position3D, Vec3};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};

/// Default lower bound on any UAV to base-station distance, in meters.
pub const DEFAULT_D_MIN: f64 = 1.0;

/// Default validation range for the path-loss exponent.
pub const GAMMA_RANGE: (f64, f64) = (2.0, 5.0);

/// Known motion of the UAV: `K − 1` velocities and intervals, plus the
/// derived displacements `Δu_0 .. Δu_{K−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryKnowledge {
    velocities: Vec<Vec3>,
    intervals: Vec<f64>,
    displacements: Vec<Vec3>,
}

impl TrajectoryKnowledge {
    pub fn new(velocities: Vec<Vec3>, intervals: Vec<f64>) -> Result<Self> {
        if velocities.len() != intervals.len() {
            return Err(Error::invalid(
                "intervals_s",
                format!(
                    "{} intervals given for {} velocities",
                    intervals.len(),
                    velocities.len()
                ),
            ));
        }
        if let Some(i) = intervals
            .iter()
            .position(|dt| !(dt.is_finite() && *dt > 0.0))
        {
            return Err(Error::invalid(
                "intervals_s",
                format!("interval {i} must be finite and strictly positive"),
            ));
        }
        if let Some(i) = velocities.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "velocities",
                format!("velocity {i} is not finite"),
            ));
        }

        let mut displacements = Vec::with_capacity(velocities.len() + 1);
        let mut acc = Vec3::ZERO;
        displacements.push(acc);
        for (v, dt) in velocities.iter().zip(&intervals) {
            acc = acc + *v * *dt;
            displacements.push(acc);
        }
        Ok(Self {
            velocities,
            intervals,
            displacements,
        })
    }

    /// A single-sample trajectory (no motion knowledge).
    pub fn stationary() -> Self {
        Self {
            velocities: Vec::new(),
            intervals: Vec::new(),
            displacements: vec![Vec3::ZERO],
        }
    }

    /// `samples` positions visited at constant velocity with a fixed interval.
    pub fn uniform(velocity: Vec3, interval: f64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::invalid(
                "velocities",
                "trajectory needs at least one sample",
            ));
        }
        Self::new(vec![velocity; samples - 1], vec![interval; samples - 1])
    }

    /// Number of trajectory samples `K`.
    pub fn len(&self) -> usize {
        self.displacements.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn displacements(&self) -> &[Vec3] {
        &self.displacements
    }

    pub fn displacement(&self, k: usize) -> Result<Vec3> {
        self.displacements
            .get(k)
            .copied()
            .ok_or(Error::TimeIndexOutOfRange {
                index: k,
                len: self.len(),
            })
    }

    /// The first `samples` trajectory points.
    pub fn truncated(&self, samples: usize) -> Result<Self> {
        if samples == 0 || samples > self.len() {
            return Err(Error::TimeIndexOutOfRange {
                index: samples,
                len: self.len(),
            });
        }
        Self::new(
            self.velocities[..samples - 1].to_vec(),
            self.intervals[..samples - 1].to_vec(),
        )
    }
}

/// Log-distance path-loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathLossParams {
    /// Path-loss exponent.
    pub gamma: f64,
    /// Reference distance in meters.
    pub d0: f64,
    /// Reference power at `d0`, in dBm. Shared by every base station.
    pub alpha: f64,
}

impl PathLossParams {
    pub fn new(gamma: f64, d0: f64, alpha: f64) -> Result<Self> {
        let (lo, hi) = GAMMA_RANGE;
        if !(gamma.is_finite() && (lo..=hi).contains(&gamma)) {
            return Err(Error::invalid(
                "gamma",
                format!("path-loss exponent {gamma} outside [{lo}, {hi}]"),
            ));
        }
        if !(d0.is_finite() && d0 > 0.0) {
            return Err(Error::invalid(
                "d0_m",
                "reference distance must be positive",
            ));
        }
        if !alpha.is_finite() {
            return Err(Error::invalid(
                "alpha_dbm",
                "reference power must be finite",
            ));
        }
        Ok(Self { gamma, d0, alpha })
    }
}

/// Per-measurement shadowing standard deviations `σ_{k,n}` in dB, stored
/// row-major as a `K × N` matrix.
///
/// Either every entry is strictly positive, or every entry is zero (the
/// noiseless limit). Mixing the two has no consistent likelihood weighting
/// and is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    samples: usize,
    stations: usize,
    sigma: Vec<f64>,
}

impl NoiseModel {
    pub fn homogeneous(samples: usize, stations: usize, sigma: f64) -> Result<Self> {
        Self::from_row_major(samples, stations, vec![sigma; samples * stations])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let samples = rows.len();
        let stations = rows.first().map_or(0, Vec::len);
        if let Some(k) = rows.iter().position(|r| r.len() != stations) {
            return Err(Error::invalid(
                "sigma_db",
                format!("row {k} has {} entries, expected {stations}", rows[k].len()),
            ));
        }
        Self::from_row_major(samples, stations, rows.concat())
    }

    pub fn from_row_major(samples: usize, stations: usize, sigma: Vec<f64>) -> Result<Self> {
        if samples == 0 || stations == 0 {
            return Err(Error::invalid("sigma_db", "noise matrix must be non-empty"));
        }
        if sigma.len() != samples * stations {
            return Err(Error::invalid(
                "sigma_db",
                format!(
                    "expected {} entries, got {}",
                    samples * stations,
                    sigma.len()
                ),
            ));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(
                "sigma_db",
                "standard deviations must be finite and >= 0",
            ));
        }
        let zeros = sigma.iter().filter(|s| **s == 0.0).count();
        if zeros != 0 && zeros != sigma.len() {
            return Err(Error::invalid(
                "sigma_db",
                "either all standard deviations are zero (noiseless) or all are positive",
            ));
        }
        Ok(Self {
            samples,
            stations,
            sigma,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.samples, self.stations)
    }

    pub fn sigma(&self, k: usize, n: usize) -> f64 {
        self.sigma[k * self.stations + n]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.sigma
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma[0] == 0.0
    }

    /// The common σ when every entry is equal.
    pub fn homogeneous_sigma(&self) -> Option<f64> {
        let first = self.sigma[0];
        self.sigma.iter().all(|s| *s == first).then_some(first)
    }

    /// Likelihood weights `σ_{k,n}⁻²`, row-major. The noiseless model gets
    /// unit weights.
    pub fn weights(&self) -> Vec<f64> {
        if self.is_noiseless() {
            vec![1.0; self.sigma.len()]
        } else {
            self.sigma.iter().map(|s| 1.0 / (s * s)).collect()
        }
    }
}

/// What a receiver knows when localizing: base-station positions, its own
/// motion, the path-loss exponent and reference distance, and the noise
/// weights. The reference power and the true position are not included.
#[derive(Debug, Clone, PartialEq)]
pub struct Knowledge {
    pub base_stations: Vec<Position3D>,
    pub trajectory: TrajectoryKnowledge,
    pub gamma: f64,
    pub d0: f64,
    pub d_min: f64,
    weights: Vec<f64>,
    uniform_weights: bool,
}

impl Knowledge {
    pub fn new(
        base_stations: Vec<Position3D>,
        trajectory: TrajectoryKnowledge,
        gamma: f64,
        d0: f64,
        noise: &NoiseModel,
    ) -> Result<Self> {
        if base_stations.is_empty() {
            return Err(Error::invalid(
                "base_stations",
                "at least one base station is required",
            ));
        }
        if noise.shape() != (trajectory.len(), base_stations.len()) {
            return Err(Error::invalid(
                "sigma_db",
                format!(
                    "noise matrix is {:?} but scenario is {} samples x {} stations",
                    noise.shape(),
                    trajectory.len(),
                    base_stations.len()
                ),
            ));
        }
        let weights = noise.weights();
        let uniform_weights = weights.iter().all(|w| *w == weights[0]);
        Ok(Self {
            base_stations,
            trajectory,
            gamma,
            d0,
            d_min: DEFAULT_D_MIN,
            weights,
            uniform_weights,
        })
    }

    pub fn with_d_min(mut self, d_min: f64) -> Self {
        self.d_min = d_min;
        self
    }

    pub fn samples(&self) -> usize {
        self.trajectory.len()
    }

    pub fn stations(&self) -> usize {
        self.base_stations.len()
    }

    /// Row-major `σ⁻²` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn has_uniform_weights(&self) -> bool {
        self.uniform_weights
    }

    /// Mean path-loss term `a_{k,n}` at candidate position `u1`.
    pub fn mean_rss(&self, u1: Position3D, k: usize, n: usize) -> Result<f64> {
        let bs = *self
            .base_stations
            .get(n)
            .ok_or(Error::StationIndexOutOfRange {
                index: n,
                len: self.stations(),
            })?;
        let d = distance(u1, bs, &self.trajectory, k, self.d_min)?;
        Ok(path_gain_db(d, self.gamma, self.d0))
    }
}

/// Full simulation ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub base_stations: Vec<Position3D>,
    pub trajectory: TrajectoryKnowledge,
    pub path_loss: PathLossParams,
    pub noise: NoiseModel,
    pub true_u1: Position3D,
    pub d_min: f64,
}

impl Scenario {
    pub fn new(
        base_stations: Vec<Position3D>,
        trajectory: TrajectoryKnowledge,
        path_loss: PathLossParams,
        noise: NoiseModel,
        true_u1: Position3D,
    ) -> Result<Self> {
        Self::with_d_min(
            base_stations,
            trajectory,
            path_loss,
            noise,
            true_u1,
            DEFAULT_D_MIN,
        )
    }

    pub fn with_d_min(
        base_stations: Vec<Position3D>,
        trajectory: TrajectoryKnowledge,
        path_loss: PathLossParams,
        noise: NoiseModel,
        true_u1: Position3D,
        d_min: f64,
    ) -> Result<Self> {
        let scenario = Self {
            base_stations,
            trajectory,
            path_loss,
            noise,
            true_u1,
            d_min,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_stations.is_empty() {
            return Err(Error::invalid(
                "base_stations",
                "at least one base station is required",
            ));
        }
        if let Some(i) = self.base_stations.iter().position(|b| !b.is_finite()) {
            return Err(Error::invalid(
                "base_stations",
                format!("station {i} is not finite"),
            ));
        }
        if !self.true_u1.is_finite() {
            return Err(Error::invalid("true_u1", "position is not finite"));
        }
        if !(self.d_min.is_finite() && self.d_min > 0.0) {
            return Err(Error::invalid("d_min_m", "must be positive"));
        }
        // Re-run the parameter checks in case fields were mutated directly.
        PathLossParams::new(
            self.path_loss.gamma,
            self.path_loss.d0,
            self.path_loss.alpha,
        )?;
        let shape = (self.trajectory.len(), self.base_stations.len());
        if self.noise.shape() != shape {
            return Err(Error::invalid(
                "sigma_db",
                format!(
                    "noise matrix is {:?}, expected {shape:?}",
                    self.noise.shape()
                ),
            ));
        }
        for k in 0..self.samples() {
            for &bs in &self.base_stations {
                distance(self.true_u1, bs, &self.trajectory, k, self.d_min)?;
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.trajectory.len()
    }

    pub fn stations(&self) -> usize {
        self.base_stations.len()
    }

    pub fn knowledge(&self) -> Knowledge {
        Knowledge::new(
            self.base_stations.clone(),
            self.trajectory.clone(),
            self.path_loss.gamma,
            self.path_loss.d0,
            &self.noise,
        )
        .expect("validated scenario")
        .with_d_min(self.d_min)
    }

    /// Copy with homogeneous noise `sigma` (0 gives noiseless measurements).
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        let mut s = self.clone();
        s.noise = NoiseModel::homogeneous(self.samples(), self.stations(), sigma)?;
        Ok(s)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut s = self.clone();
        s.path_loss = PathLossParams::new(gamma, self.path_loss.d0, self.path_loss.alpha)?;
        Ok(s)
    }

    pub fn with_true_u1(&self, u1: Position3D) -> Result<Self> {
        let mut s = self.clone();
        s.true_u1 = u1;
        s.validate()?;
        Ok(s)
    }

    /// Keep only the first `samples` trajectory points (and noise rows).
    pub fn truncated(&self, samples: usize) -> Result<Self> {
        let trajectory = self.trajectory.truncated(samples)?;
        let n = self.stations();
        let noise = NoiseModel::from_row_major(
            samples,
            n,
            self.noise.as_row_major()[..samples * n].to_vec(),
        )?;
        Self::with_d_min(
            self.base_stations.clone(),
            trajectory,
            self.path_loss,
            noise,
            self.true_u1,
            self.d_min,
        )
    }

    /// True UAV position at time `k`.
    pub fn true_position(&self, k: usize) -> Result<Position3D> {
        Ok(self.true_u1 + self.trajectory.displacement(k)?)
    }

    pub fn mean_rss(&self, u1: Position3D, k: usize, n: usize) -> Result<f64> {
        mean_rss(u1, self, k, n)
    }
}

/// `K × N` matrix of received signal strengths in dBm, row `k` holding the
/// samples from every base station at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RssMatrix {
    samples: usize,
    stations: usize,
    values: Vec<f64>,
}

impl RssMatrix {
    pub fn from_row_major(samples: usize, stations: usize, values: Vec<f64>) -> Result<Self> {
        if samples == 0 || stations == 0 {
            return Err(Error::EmptyInput("RSS matrix"));
        }
        if values.len() != samples * stations {
            return Err(Error::invalid(
                "rss",
                format!(
                    "expected {} values, got {}",
                    samples * stations,
                    values.len()
                ),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("rss", "all RSS values must be finite"));
        }
        Ok(Self {
            samples,
            stations,
            values,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.samples, self.stations)
    }

    pub fn get(&self, k: usize, n: usize) -> f64 {
        self.values[k * self.stations + n]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.stations..(k + 1) * self.stations]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.stations)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Copy with `offset` dB added to every cell.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + offset).collect(),
            ..self.clone()
        }
    }

    /// Keep only the first `samples` rows.
    pub fn truncated(&self, samples: usize) -> Result<Self> {
        if samples == 0 || samples > self.samples {
            return Err(Error::TimeIndexOutOfRange {
                index: samples,
                len: self.samples,
            });
        }
        Self::from_row_major(
            samples,
            self.stations,
            self.values[..samples * self.stations].to_vec(),
        )
    }
}

impl Serialize for RssMatrix {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

/// Displacement `Δu_k` of the UAV relative to its first position.
pub fn displacement(trajectory: &TrajectoryKnowledge, k: usize) -> Result<Vec3> {
    trajectory.displacement(k)
}

/// Position of the virtual moving base station `s_n − Δu_k`.
pub fn virtual_bs_position(
    bs: Position3D,
    trajectory: &TrajectoryKnowledge,
    k: usize,
) -> Result<Position3D> {
    Ok(bs - trajectory.displacement(k)?)
}

/// Distance between the UAV at time `k` (starting from `u1`) and base station
/// `bs`, evaluated against the virtual base station.
pub fn distance(
    u1: Position3D,
    bs: Position3D,
    trajectory: &TrajectoryKnowledge,
    k: usize,
    d_min: f64,
) -> Result<f64> {
    let d = virtual_range(u1, bs, trajectory.displacement(k)?);
    check_distance(d, d_min)
}

/// `‖u1 − (bs − Δu)‖`. Every range evaluation in the crate goes through
/// here so that synthesized and searched model values agree bit for bit.
#[inline]
pub(crate) fn virtual_range(u1: Position3D, bs: Position3D, displacement: Vec3) -> f64 {
    (u1 - (bs - displacement)).norm()
}

#[inline]
pub(crate) fn check_distance(d: f64, d_min: f64) -> Result<f64> {
    if d < d_min || d.is_nan() {
        Err(Error::DegenerateGeometry { distance: d, d_min })
    } else {
        Ok(d)
    }
}

/// `10 γ log10(d0 / d)`: mean received power relative to the reference power.
#[inline]
pub fn path_gain_db(d: f64, gamma: f64, d0: f64) -> f64 {
    10.0 * gamma * (d0 / d).log10()
}

/// Mean path-loss term `a_{k,n}` for a UAV that started at `u1`.
pub fn mean_rss(u1: Position3D, scenario: &Scenario, k: usize, n: usize) -> Result<f64> {
    let bs = *scenario
        .base_stations
        .get(n)
        .ok_or(Error::StationIndexOutOfRange {
            index: n,
            len: scenario.stations(),
        })?;
    let d = distance(u1, bs, &scenario.trajectory, k, scenario.d_min)?;
    Ok(path_gain_db(
        d,
        scenario.path_loss.gamma,
        scenario.path_loss.d0,
    ))
}

/// Draw one noisy RSS matrix `r_{k,n} = α + a_{k,n} + w_{k,n}`.
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`,
/// and standard normals are drawn in row-major `(k, n)` order and scaled by
/// `σ_{k,n}`, so the result is a pure function of `(scenario, seed)` on every
/// platform. Scenarios that differ only in σ share the same underlying
/// standard-normal draws for a given seed.
pub fn synthesize(scenario: &Scenario, seed: u64) -> Result<RssMatrix> {
    let (samples, stations) = (scenario.samples(), scenario.stations());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = scenario.path_loss.alpha;
    let mut values = Vec::with_capacity(samples * stations);
    for k in 0..samples {
        for n in 0..stations {
            let z: f64 = StandardNormal.sample(&mut rng);
            let a = mean_rss(scenario.true_u1, scenario, k, n)?;
            values.push(alpha + a + scenario.noise.sigma(k, n) * z);
        }
    }
    RssMatrix::from_row_major(samples, stations, values)
}
