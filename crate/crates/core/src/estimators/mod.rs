//! Grid-search localization of the UAV's initial position `u1`.
//!
//! Four estimators share one profiled objective (see [`objective`]):
//!
//! * **joint** minimizes the objective over all `K × N` measurements;
//! * **LCSL-BST** localizes against each base station separately using its
//!   `K` samples along the trajectory, then averages the `N` estimates;
//! * **LCSL-TBS** localizes at each time step separately using the `N`
//!   simultaneous samples, then averages the `K` estimates;
//! * **baseline** ignores the trajectory and uses only the first time step.
//!
//! A [`Locator`] caches the model means `a_{k,n}` at every grid node, which
//! depend only on geometry and the path-loss exponent. Repeated searches
//! against new measurements then cost a few multiply-adds per cell.

mod grid;
mod objective;

pub use grid::{GridMode, SearchGrid, REFINE_DIVISOR};
pub use objective::{alpha_hat, objective, ObjectiveSlice};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Knowledge, Position3D, RssMatrix, Vec3};
use objective::{check_shape, model_means_into, profiled, CellSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Joint,
    Bst,
    Tbs,
    Baseline,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Joint,
        EstimatorKind::Bst,
        EstimatorKind::Tbs,
        EstimatorKind::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Joint => "joint",
            EstimatorKind::Bst => "bst",
            EstimatorKind::Tbs => "tbs",
            EstimatorKind::Baseline => "baseline",
        }
    }

    /// Objective slices searched by this estimator.
    pub fn slices(self, samples: usize, stations: usize) -> Vec<ObjectiveSlice> {
        match self {
            EstimatorKind::Joint => vec![ObjectiveSlice::All],
            EstimatorKind::Bst => (0..stations).map(ObjectiveSlice::Station).collect(),
            EstimatorKind::Tbs => (0..samples).map(ObjectiveSlice::Time).collect(),
            EstimatorKind::Baseline => vec![ObjectiveSlice::Time(0)],
        }
    }

    /// Nominal real multiplications per grid node: `4(KN)²` for the joint
    /// search, `4K²N` for LCSL-BST, `4KN²` for LCSL-TBS and `4N²` for the
    /// single-snapshot baseline. Reported for comparison only.
    pub fn nominal_multiplications_per_node(self, samples: usize, stations: usize) -> u64 {
        let (k, n) = (samples as u64, stations as u64);
        match self {
            EstimatorKind::Joint => 4 * (k * n) * (k * n),
            EstimatorKind::Bst => 4 * k * k * n,
            EstimatorKind::Tbs => 4 * k * n * n,
            EstimatorKind::Baseline => 4 * n * n,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "joint" => Ok(EstimatorKind::Joint),
            "bst" | "lcsl-bst" => Ok(EstimatorKind::Bst),
            "tbs" | "lcsl-tbs" => Ok(EstimatorKind::Tbs),
            "baseline" => Ok(EstimatorKind::Baseline),
            other => Err(Error::invalid(
                "estimator",
                format!("unknown estimator `{other}` (joint, bst, tbs, baseline)"),
            )),
        }
    }
}

/// Minimizer of one objective slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentEstimate {
    pub slice: ObjectiveSlice,
    pub u1_hat: Position3D,
    pub objective: f64,
    pub alpha_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub u1_hat: Position3D,
    /// Objective at the minimum; the sum of component minima for the
    /// separable estimators.
    pub objective_at_min: f64,
    /// Profiled reference power at the minimum (joint and baseline only).
    pub alpha_hat: Option<f64>,
    /// Objective evaluations performed, summed over components.
    pub grid_points_evaluated: usize,
    pub nominal_multiplications: u64,
    /// Per-station (BST) or per-time (TBS) estimates before fusion.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_component_estimates: Vec<ComponentEstimate>,
}

/// Nodes per work item when searching in parallel.
const CHUNK: usize = 2048;

/// Model means are cached for grids up to this many `node × cell` entries.
const TABLE_LIMIT: usize = 1 << 23;

/// Best (objective, node index) seen so far; ties keep the lower index.
#[derive(Debug, Clone, Copy)]
struct Best {
    q: f64,
    index: usize,
}

/// Objective values closer than this (relative) count as ties. They differ
/// only by rounding, e.g. the mirror-image minima of a station that lies on
/// the line of flight, and must not be separated by a constant RSS offset.
const TIE_RTOL: f64 = 1e-9;

fn better(current: Option<Best>, candidate: Best) -> Option<Best> {
    match current {
        Some(b) => {
            let margin = TIE_RTOL * b.q.abs().max(candidate.q.abs());
            let wins = candidate.q < b.q - margin
                || (candidate.q <= b.q + margin && candidate.index < b.index);
            Some(if wins { candidate } else { b })
        }
        None => Some(candidate),
    }
}

/// Grid-search engine bound to one set of receiver knowledge and one grid.
#[derive(Debug, Clone)]
pub struct Locator {
    knowledge: Knowledge,
    grid: SearchGrid,
    table: Option<Vec<f64>>,
    execution: Execution,
}

impl Locator {
    pub fn new(knowledge: Knowledge, grid: SearchGrid) -> Self {
        Self::with_execution(knowledge, grid, Execution::default())
    }

    pub fn with_execution(knowledge: Knowledge, grid: SearchGrid, execution: Execution) -> Self {
        let cells = knowledge.samples() * knowledge.stations();
        let nodes = grid.node_count();
        let table = (nodes.saturating_mul(cells) <= TABLE_LIMIT).then(|| {
            let chunks = nodes.div_ceil(CHUNK);
            execution
                .map(chunks, |c| {
                    let mut out = Vec::with_capacity(CHUNK * cells);
                    let mut buf = Vec::with_capacity(cells);
                    for i in c * CHUNK..((c + 1) * CHUNK).min(nodes) {
                        model_means_into(&knowledge, grid.node(i), &mut buf);
                        out.extend_from_slice(&buf);
                    }
                    out
                })
                .concat()
        });
        Self {
            knowledge,
            grid,
            table,
            execution,
        }
    }

    pub fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    pub fn execution(&self) -> Execution {
        self.execution
    }

    /// Same cached model, different evaluation strategy.
    pub fn set_execution(&mut self, execution: Execution) {
        self.execution = execution;
    }

    pub fn estimate(&self, kind: EstimatorKind, rss: &RssMatrix) -> Result<EstimateReport> {
        check_shape(rss, &self.knowledge)?;
        let (samples, stations) = (self.knowledge.samples(), self.knowledge.stations());
        let slices = kind.slices(samples, stations);
        let cells = slices
            .iter()
            .map(|s| s.cells(samples, stations))
            .collect::<Result<Vec<_>>>()?;

        let coarse = self.search(rss, &cells);
        let mut evaluated = self.grid.node_count() * cells.len();
        let mut components = Vec::with_capacity(cells.len());
        for ((slice, set), best) in slices.iter().zip(&cells).zip(coarse) {
            let best = best.ok_or(Error::EmptyFeasibleSet)?;
            let mut u1_hat = self.grid.node(best.index);
            if self.grid.refine() {
                let fine = self.grid.refinement_nodes(u1_hat);
                evaluated += fine.len();
                u1_hat = self.refine(rss, *set, &fine).unwrap_or(u1_hat);
            }
            let (objective, alpha_hat) = self
                .evaluate(rss, *set, u1_hat)
                .ok_or(Error::EmptyFeasibleSet)?;
            components.push(ComponentEstimate {
                slice: *slice,
                u1_hat,
                objective,
                alpha_hat,
            });
        }

        let nominal = kind.nominal_multiplications_per_node(samples, stations)
            * self.grid.node_count() as u64;
        let objective_at_min = components.iter().map(|c| c.objective).sum();
        let report = match kind {
            EstimatorKind::Joint | EstimatorKind::Baseline => {
                let c = components.pop().expect("one component");
                EstimateReport {
                    estimator: kind,
                    u1_hat: c.u1_hat,
                    objective_at_min,
                    alpha_hat: Some(c.alpha_hat),
                    grid_points_evaluated: evaluated,
                    nominal_multiplications: nominal,
                    per_component_estimates: Vec::new(),
                }
            }
            EstimatorKind::Bst | EstimatorKind::Tbs => EstimateReport {
                estimator: kind,
                u1_hat: fuse(components.iter().map(|c| c.u1_hat)),
                objective_at_min,
                alpha_hat: None,
                grid_points_evaluated: evaluated,
                nominal_multiplications: nominal,
                per_component_estimates: components,
            },
        };
        Ok(report)
    }

    /// Coarse argmin of every cell set over the whole grid.
    fn search(&self, rss: &RssMatrix, sets: &[CellSet]) -> Vec<Option<Best>> {
        let nodes = self.grid.node_count();
        let cells = self.knowledge.samples() * self.knowledge.stations();
        let r = rss.as_row_major();
        let w = self.knowledge.weights();

        let per_chunk = self.execution.map(nodes.div_ceil(CHUNK), |c| {
            let mut best: Vec<Option<Best>> = vec![None; sets.len()];
            let mut buf = Vec::new();
            for index in c * CHUNK..((c + 1) * CHUNK).min(nodes) {
                let means = match &self.table {
                    Some(t) => &t[index * cells..(index + 1) * cells],
                    None => {
                        model_means_into(&self.knowledge, self.grid.node(index), &mut buf);
                        &buf[..]
                    }
                };
                for (b, set) in best.iter_mut().zip(sets) {
                    if let Some((q, _)) = profiled(*set, r, means, w) {
                        if q.is_finite() {
                            *b = better(*b, Best { q, index });
                        }
                    }
                }
            }
            best
        });

        // Chunks arrive in index order, so the first minimum still wins.
        per_chunk
            .into_iter()
            .fold(vec![None; sets.len()], |acc, chunk| {
                acc.into_iter()
                    .zip(chunk)
                    .map(|(a, b)| match b {
                        Some(b) => better(a, b),
                        None => a,
                    })
                    .collect()
            })
    }

    fn evaluate(&self, rss: &RssMatrix, set: CellSet, u1: Position3D) -> Option<(f64, f64)> {
        let mut means = Vec::new();
        model_means_into(&self.knowledge, u1, &mut means);
        profiled(set, rss.as_row_major(), &means, self.knowledge.weights())
    }

    fn refine(&self, rss: &RssMatrix, set: CellSet, nodes: &[Position3D]) -> Option<Position3D> {
        let mut best: Option<Best> = None;
        for (index, &u) in nodes.iter().enumerate() {
            if let Some((q, _)) = self.evaluate(rss, set, u) {
                if q.is_finite() {
                    best = better(best, Best { q, index });
                }
            }
        }
        best.map(|b| nodes[b.index])
    }
}

/// Equal-weight fusion of component estimates. Equivalent to the running
/// update `û_n = ((n−1)/n) û_{n−1} + (1/n) ũ_n`, evaluated in closed form.
pub fn fuse(estimates: impl IntoIterator<Item = Position3D>) -> Position3D {
    let (sum, count) = estimates
        .into_iter()
        .fold((Vec3::ZERO, 0usize), |(s, c), u| (s + u, c + 1));
    let n = count as f64;
    Vec3::new(sum.x / n, sum.y / n, sum.z / n)
}

/// Running-mean form of [`fuse`].
pub fn fuse_recursive(estimates: impl IntoIterator<Item = Position3D>) -> Position3D {
    estimates
        .into_iter()
        .enumerate()
        .fold(Vec3::ZERO, |acc, (i, u)| {
            let n = (i + 1) as f64;
            acc * ((n - 1.0) / n) + u * (1.0 / n)
        })
}

/// Joint trajectory-aided ML estimate over all measurements.
pub fn estimate_joint(
    rss: &RssMatrix,
    knowledge: &Knowledge,
    grid: &SearchGrid,
) -> Result<EstimateReport> {
    Locator::new(knowledge.clone(), grid.clone()).estimate(EstimatorKind::Joint, rss)
}

/// Per-station search along the trajectory, fused across stations.
pub fn estimate_lcsl_bst(
    rss: &RssMatrix,
    knowledge: &Knowledge,
    grid: &SearchGrid,
) -> Result<EstimateReport> {
    Locator::new(knowledge.clone(), grid.clone()).estimate(EstimatorKind::Bst, rss)
}

/// Per-time search across stations, fused across time.
pub fn estimate_lcsl_tbs(
    rss: &RssMatrix,
    knowledge: &Knowledge,
    grid: &SearchGrid,
) -> Result<EstimateReport> {
    Locator::new(knowledge.clone(), grid.clone()).estimate(EstimatorKind::Tbs, rss)
}

/// ML over the first time step only, without trajectory knowledge.
pub fn estimate_baseline(
    rss: &RssMatrix,
    knowledge: &Knowledge,
    grid: &SearchGrid,
) -> Result<EstimateReport> {
    Locator::new(knowledge.clone(), grid.clone()).estimate(EstimatorKind::Baseline, rss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hexagon_scenario, synthesize};

    fn small_grid() -> SearchGrid {
        SearchGrid::planar(Vec3::new(0.0, 0.0, 100.0), 200.0, 10.0).unwrap()
    }

    #[test]
    fn noiseless_recovery_on_grid() {
        let s = hexagon_scenario().with_sigma(0.0).unwrap();
        let rss = synthesize(&s, 0).unwrap();
        let locator = Locator::new(s.knowledge(), small_grid());
        for kind in EstimatorKind::ALL {
            let report = locator.estimate(kind, &rss).unwrap();
            assert_eq!(report.u1_hat, s.true_u1, "{kind}");
            assert!(
                report.objective_at_min < 1e-12,
                "{kind}: {}",
                report.objective_at_min
            );
        }
    }

    #[test]
    fn noiseless_off_grid_truth_lands_within_one_cell() {
        let s = hexagon_scenario()
            .with_sigma(0.0)
            .unwrap()
            .with_true_u1(Vec3::new(33.0, -17.0, 100.0))
            .unwrap();
        let rss = synthesize(&s, 0).unwrap();
        let grid = small_grid();
        let report = estimate_joint(&rss, &s.knowledge(), &grid).unwrap();
        assert!(report.u1_hat.distance(s.true_u1) <= 10.0 * 2f64.sqrt());
        // Exhaustive re-evaluation finds the same node.
        let k = s.knowledge();
        let (best, _) = grid
            .nodes()
            .map(|u| (u, objective(u, &rss, &k, ObjectiveSlice::All).unwrap()))
            .fold((Vec3::ZERO, f64::INFINITY), |acc, (u, q)| {
                if q < acc.1 {
                    (u, q)
                } else {
                    acc
                }
            });
        assert_eq!(report.u1_hat, best);
    }

    #[test]
    fn refinement_recovers_off_grid_truth() {
        let s = hexagon_scenario()
            .with_sigma(0.0)
            .unwrap()
            .with_true_u1(Vec3::new(33.0, -17.0, 100.0))
            .unwrap();
        let rss = synthesize(&s, 0).unwrap();
        let grid = small_grid().with_refinement(true);
        let report = estimate_joint(&rss, &s.knowledge(), &grid).unwrap();
        assert!(
            report.u1_hat.distance(s.true_u1) < 1e-6,
            "{:?}",
            report.u1_hat
        );
        assert_eq!(report.grid_points_evaluated, grid.node_count() + 21 * 21);
    }

    #[test]
    fn separable_estimators_fuse_components() {
        let s = hexagon_scenario();
        let rss = synthesize(&s, 5).unwrap();
        let locator = Locator::new(s.knowledge(), small_grid());
        for kind in [EstimatorKind::Bst, EstimatorKind::Tbs] {
            let r = locator.estimate(kind, &rss).unwrap();
            let expected_len = if kind == EstimatorKind::Bst { 6 } else { 10 };
            assert_eq!(r.per_component_estimates.len(), expected_len);
            let comps = r.per_component_estimates.iter().map(|c| c.u1_hat);
            assert_eq!(r.u1_hat, fuse(comps.clone()));
            assert!(r.u1_hat.distance(fuse_recursive(comps)) < 1e-9);
            assert!(r.alpha_hat.is_none());
        }
    }

    #[test]
    fn tbs_with_one_sample_matches_baseline() {
        let s = hexagon_scenario().truncated(1).unwrap();
        let rss = synthesize(&s, 11).unwrap();
        let k = s.knowledge();
        let tbs = estimate_lcsl_tbs(&rss, &k, &small_grid()).unwrap();
        let base = estimate_baseline(&rss, &k, &small_grid()).unwrap();
        assert_eq!(tbs.u1_hat, base.u1_hat);
        assert_eq!(tbs.objective_at_min, base.objective_at_min);
    }

    #[test]
    fn single_station_bst_matches_joint() {
        let full = hexagon_scenario();
        let s = crate::model::Scenario::new(
            vec![full.base_stations[1]],
            full.trajectory.clone(),
            full.path_loss,
            crate::model::NoiseModel::homogeneous(10, 1, 6.0).unwrap(),
            full.true_u1,
        )
        .unwrap();
        let rss = synthesize(&s, 2).unwrap();
        let k = s.knowledge();
        let bst = estimate_lcsl_bst(&rss, &k, &small_grid()).unwrap();
        let joint = estimate_joint(&rss, &k, &small_grid()).unwrap();
        assert_eq!(bst.u1_hat, joint.u1_hat);
    }

    #[test]
    fn degenerate_slices_error() {
        let s = hexagon_scenario().truncated(1).unwrap();
        let rss = synthesize(&s, 0).unwrap();
        let err = estimate_lcsl_bst(&rss, &s.knowledge(), &small_grid()).unwrap_err();
        assert!(matches!(err, Error::SingleCellSlice(_)));
    }

    #[test]
    fn mismatched_rss_is_rejected() {
        let s = hexagon_scenario();
        let rss = synthesize(&s.truncated(3).unwrap(), 0).unwrap();
        assert!(estimate_joint(&rss, &s.knowledge(), &small_grid()).is_err());
    }

    #[test]
    fn empty_feasible_set() {
        let s = hexagon_scenario();
        let rss = synthesize(&s, 0).unwrap();
        // Every node sits within d_min of the station at [1000, 0, 20].
        let grid = SearchGrid::planar(Vec3::new(1000.0, 0.0, 20.0), 0.2, 0.1).unwrap();
        let k = s.knowledge();
        assert_eq!(
            estimate_baseline(&rss, &k, &grid),
            Err(Error::EmptyFeasibleSet)
        );
    }

    #[test]
    fn serial_and_parallel_agree() {
        let s = hexagon_scenario();
        let rss = synthesize(&s, 8).unwrap();
        let grid = SearchGrid::standard_aoi(100.0);
        let mut locator = Locator::with_execution(s.knowledge(), grid, Execution::Serial);
        let serial: Vec<_> = EstimatorKind::ALL
            .iter()
            .map(|k| locator.estimate(*k, &rss).unwrap())
            .collect();
        locator.set_execution(Execution::Parallel);
        let parallel: Vec<_> = EstimatorKind::ALL
            .iter()
            .map(|k| locator.estimate(*k, &rss).unwrap())
            .collect();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn complexity_counters() {
        assert_eq!(
            EstimatorKind::Joint.nominal_multiplications_per_node(10, 6),
            14_400
        );
        assert_eq!(
            EstimatorKind::Bst.nominal_multiplications_per_node(10, 6),
            2_400
        );
        assert_eq!(
            EstimatorKind::Tbs.nominal_multiplications_per_node(10, 6),
            1_440
        );
        assert_eq!(
            "lcsl-bst".parse::<EstimatorKind>().unwrap(),
            EstimatorKind::Bst
        );
        assert!("nope".parse::<EstimatorKind>().is_err());
    }
}
