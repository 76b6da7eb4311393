//! The profiled least-squares objective shared by every estimator.
//!
//! For a set of cells `S` of the RSS matrix, with residuals
//! `e = r − a(u1)` and weights `w = σ⁻²`, the unknown reference power is
//! profiled out at its weighted mean `α̂ = Σ w e / Σ w`, leaving
//! `Q(u1) = Σ w (e − α̂)²`. The joint estimator uses every cell, LCSL-BST one
//! column per base station and LCSL-TBS one row per time step.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Knowledge, Position3D, RssMatrix};

/// Which cells of the RSS matrix enter an objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "slice", content = "index", rename_all = "lowercase")]
pub enum ObjectiveSlice {
    All,
    /// Column `n`: one base station over the whole trajectory.
    Station(usize),
    /// Row `k`: every base station at one time step.
    Time(usize),
}

impl fmt::Display for ObjectiveSlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveSlice::All => write!(f, "all"),
            ObjectiveSlice::Station(n) => write!(f, "station {n}"),
            ObjectiveSlice::Time(k) => write!(f, "time {k}"),
        }
    }
}

/// Arithmetic progression of row-major cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CellSet {
    pub start: usize,
    pub stride: usize,
    pub len: usize,
}

impl CellSet {
    pub fn indices(self) -> impl Iterator<Item = usize> + Clone {
        (0..self.len).map(move |i| self.start + i * self.stride)
    }
}

impl ObjectiveSlice {
    pub(crate) fn cells(self, samples: usize, stations: usize) -> Result<CellSet> {
        let set = match self {
            ObjectiveSlice::All => CellSet {
                start: 0,
                stride: 1,
                len: samples * stations,
            },
            ObjectiveSlice::Station(n) => {
                if n >= stations {
                    return Err(Error::StationIndexOutOfRange {
                        index: n,
                        len: stations,
                    });
                }
                CellSet {
                    start: n,
                    stride: stations,
                    len: samples,
                }
            }
            ObjectiveSlice::Time(k) => {
                if k >= samples {
                    return Err(Error::TimeIndexOutOfRange {
                        index: k,
                        len: samples,
                    });
                }
                CellSet {
                    start: k * stations,
                    stride: 1,
                    len: stations,
                }
            }
        };
        if set.len < 2 {
            return Err(Error::SingleCellSlice(self.to_string()));
        }
        Ok(set)
    }
}

/// Weighted-mean estimate of the reference power: the exact minimizer of
/// `Σ w (e − α)²`. With equal weights this is the plain mean of the residuals.
pub fn alpha_hat(residuals: &[f64], weights: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::EmptyInput("residuals"));
    }
    if residuals.len() != weights.len() {
        return Err(Error::invalid(
            "weights",
            format!(
                "{} weights for {} residuals",
                weights.len(),
                residuals.len()
            ),
        ));
    }
    let (sw, swe) = residuals
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(sw, swe), (e, w)| (sw + w, swe + w * e));
    Ok(swe / sw)
}

/// Profiled objective and `α̂` over `cells`, given row-major measurements,
/// model means and weights. `None` when any selected mean is NaN (a
/// degenerate cell).
#[inline]
pub(crate) fn profiled(
    cells: CellSet,
    rss: &[f64],
    means: &[f64],
    weights: &[f64],
) -> Option<(f64, f64)> {
    let mut sw = 0.0;
    let mut swe = 0.0;
    for c in cells.indices() {
        let e = rss[c] - means[c];
        if e.is_nan() {
            return None;
        }
        sw += weights[c];
        swe += weights[c] * e;
    }
    let alpha = swe / sw;
    let q = cells
        .indices()
        .map(|c| {
            let d = rss[c] - means[c] - alpha;
            weights[c] * d * d
        })
        .sum();
    Some((q, alpha))
}

/// Model means `a_{k,n}(u1)` for every cell, row-major. Cells closer than
/// `d_min` are NaN.
pub(crate) fn model_means_into(knowledge: &Knowledge, u1: Position3D, out: &mut Vec<f64>) {
    out.clear();
    for &disp in knowledge.trajectory.displacements() {
        for &bs in &knowledge.base_stations {
            let d = crate::model::virtual_range(u1, bs, disp);
            out.push(if d < knowledge.d_min {
                f64::NAN
            } else {
                crate::model::path_gain_db(d, knowledge.gamma, knowledge.d0)
            });
        }
    }
}

pub(crate) fn check_shape(rss: &RssMatrix, knowledge: &Knowledge) -> Result<()> {
    let expected = (knowledge.samples(), knowledge.stations());
    if rss.shape() != expected {
        return Err(Error::invalid(
            "rss",
            format!(
                "RSS matrix is {:?}, knowledge expects {expected:?}",
                rss.shape()
            ),
        ));
    }
    Ok(())
}

/// Profiled objective at `u1` over the cells selected by `slice`.
pub fn objective(
    u1: Position3D,
    rss: &RssMatrix,
    knowledge: &Knowledge,
    slice: ObjectiveSlice,
) -> Result<f64> {
    check_shape(rss, knowledge)?;
    let cells = slice.cells(knowledge.samples(), knowledge.stations())?;
    let stations = knowledge.stations();
    let mut means = vec![0.0; rss.as_row_major().len()];
    for c in cells.indices() {
        means[c] = knowledge.mean_rss(u1, c / stations, c % stations)?;
    }
    let (q, _) = profiled(cells, rss.as_row_major(), &means, knowledge.weights())
        .expect("means checked against d_min");
    Ok(q)
}
