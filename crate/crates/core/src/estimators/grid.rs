use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Position3D, Vec3};

/// Whether the search runs over a horizontal plane at a known altitude or
/// over a 3D box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridMode {
    Planar { altitude: f64 },
    Volumetric,
}

/// Regular search lattice. Nodes are enumerated row-major with `x` varying
/// fastest, then `y`, then `z`; the first node is the low corner
/// `center − half_extent`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchGrid {
    center: Position3D,
    half_extent: Vec3,
    step: Vec3,
    mode: GridMode,
    refine: bool,
    #[serde(skip)]
    counts: [usize; 3],
}

/// Refinement re-searches ±1 coarse step at this fraction of the step.
pub const REFINE_DIVISOR: usize = 10;

impl SearchGrid {
    /// Horizontal square grid at `center.z`, the known UAV altitude.
    pub fn planar(center: Position3D, half_extent: f64, step: f64) -> Result<Self> {
        Self::build(
            center,
            Vec3::new(half_extent, half_extent, 0.0),
            Vec3::new(step, step, 1.0),
            GridMode::Planar { altitude: center.z },
        )
    }

    pub fn volumetric(center: Position3D, half_extent: Vec3, step: Vec3) -> Result<Self> {
        if half_extent.z.is_nan() || half_extent.z <= 0.0 {
            return Err(Error::invalid(
                "grid",
                "vertical half-extent must be positive",
            ));
        }
        Self::build(center, half_extent, step, GridMode::Volumetric)
    }

    /// 2 km × 2 km area of interest centered on the origin, 10 m spacing.
    pub fn standard_aoi(altitude: f64) -> Self {
        Self::planar(Vec3::new(0.0, 0.0, altitude), 1000.0, 10.0).expect("valid AOI")
    }

    fn build(center: Position3D, half_extent: Vec3, step: Vec3, mode: GridMode) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::invalid("grid", "center must be finite"));
        }
        let axes = if matches!(mode, GridMode::Planar { .. }) {
            2
        } else {
            3
        };
        let mut counts = [1usize; 3];
        for (axis, count) in counts.iter_mut().enumerate().take(axes) {
            let (h, s) = (half_extent.component(axis), step.component(axis));
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid("grid", "half-extents must be positive"));
            }
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid("grid", "steps must be positive"));
            }
            *count = (2.0 * h / s + 1e-9).floor() as usize + 1;
        }
        Ok(Self {
            center,
            half_extent,
            step,
            mode,
            refine: false,
            counts,
        })
    }

    /// Enable one level of local refinement around each coarse minimum.
    pub fn with_refinement(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }

    pub fn refine(&self) -> bool {
        self.refine
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn center(&self) -> Position3D {
        self.center
    }

    pub fn step(&self) -> Vec3 {
        self.step
    }

    pub fn half_extent(&self) -> Vec3 {
        self.half_extent
    }

    pub fn is_planar(&self) -> bool {
        matches!(self.mode, GridMode::Planar { .. })
    }

    /// Number of nodes along x, y and z.
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    fn origin(&self) -> Position3D {
        match self.mode {
            GridMode::Planar { altitude } => Vec3::new(
                self.center.x - self.half_extent.x,
                self.center.y - self.half_extent.y,
                altitude,
            ),
            GridMode::Volumetric => self.center - self.half_extent,
        }
    }

    pub fn node(&self, index: usize) -> Position3D {
        let [nx, ny, _] = self.counts;
        let (i, j, l) = (index % nx, (index / nx) % ny, index / (nx * ny));
        let o = self.origin();
        Vec3::new(
            o.x + i as f64 * self.step.x,
            o.y + j as f64 * self.step.y,
            match self.mode {
                GridMode::Planar { .. } => o.z,
                GridMode::Volumetric => o.z + l as f64 * self.step.z,
            },
        )
    }

    pub fn nodes(&self) -> impl Iterator<Item = Position3D> + '_ {
        (0..self.node_count()).map(|i| self.node(i))
    }

    /// Fine lattice spanning ±1 coarse step around `center` at
    /// `step / REFINE_DIVISOR`, in the same node order.
    pub(crate) fn refinement_nodes(&self, center: Position3D) -> Vec<Position3D> {
        let span = REFINE_DIVISOR as i64;
        let fine = self.step * (1.0 / REFINE_DIVISOR as f64);
        let zs: Vec<i64> = if self.is_planar() {
            vec![0]
        } else {
            (-span..=span).collect()
        };
        let mut out = Vec::new();
        for &l in &zs {
            for j in -span..=span {
                for i in -span..=span {
                    out.push(Vec3::new(
                        center.x + i as f64 * fine.x,
                        center.y + j as f64 * fine.y,
                        center.z + l as f64 * fine.z,
                    ));
                }
            }
        }
        out
    }

    /// Horizontal RMS quantization error of a nearest-node estimate,
    /// `step / √6` per axis combined in quadrature.
    pub fn quantization_floor(&self) -> f64 {
        let per_axis = |s: f64| s / 6f64.sqrt();
        per_axis(self.step.x).hypot(per_axis(self.step.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_aoi_has_201_nodes_per_axis() {
        let g = SearchGrid::standard_aoi(100.0);
        assert_eq!(g.counts(), [201, 201, 1]);
        assert_eq!(g.node(0), Vec3::new(-1000.0, -1000.0, 100.0));
        assert_eq!(g.node(g.node_count() - 1), Vec3::new(1000.0, 1000.0, 100.0));
        // x varies fastest.
        assert_eq!(g.node(1), Vec3::new(-990.0, -1000.0, 100.0));
        assert_eq!(g.node(201), Vec3::new(-1000.0, -990.0, 100.0));
        assert_eq!(g.node(100 + 201 * 100), Vec3::new(0.0, 0.0, 100.0));
    }

    #[test]
    fn volumetric_grid_indexes_z_last() {
        let g = SearchGrid::volumetric(
            Vec3::new(0.0, 0.0, 100.0),
            Vec3::new(10.0, 10.0, 20.0),
            Vec3::new(10.0, 10.0, 10.0),
        )
        .unwrap();
        assert_eq!(g.counts(), [3, 3, 5]);
        assert_eq!(g.node(9), Vec3::new(-10.0, -10.0, 90.0));
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(SearchGrid::planar(Vec3::ZERO, 0.0, 10.0).is_err());
        assert!(SearchGrid::planar(Vec3::ZERO, 100.0, -1.0).is_err());
        assert!(SearchGrid::volumetric(
            Vec3::ZERO,
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0)
        )
        .is_err());
    }

    #[test]
    fn refinement_lattice_contains_center() {
        let g = SearchGrid::standard_aoi(100.0);
        let c = Vec3::new(20.0, -30.0, 100.0);
        let fine = g.refinement_nodes(c);
        assert_eq!(fine.len(), 21 * 21);
        assert!(fine.contains(&c));
        assert_eq!(fine[0], Vec3::new(10.0, -40.0, 100.0));
    }

    #[test]
    fn quantization_floor_for_ten_meter_grid() {
        let g = SearchGrid::standard_aoi(100.0);
        assert!((g.quantization_floor() - 10.0 / 3f64.sqrt()).abs() < 1e-12);
    }
}
