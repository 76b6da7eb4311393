//! Cramér-Rao bound for the joint estimator.
//!
//! With homogeneous shadowing `C = σ² I`, the bound on the covariance of any
//! unbiased estimate of `u1` is `σ² G⁻¹`, where
//!
//! ```text
//! g_ij = a_iᵀ a_j − (1/NK) (Σ a_i)(Σ a_j),    a_i = ∂a/∂u1(i)
//! ```
//!
//! and the gradient entries are `β (u1 + Δu_k − s_n)_i / d_{k,n}²` with
//! `β = −10γ / ln 10`. The second term accounts for the unknown reference
//! power. The miss-distance bound is `σ √(trace G⁻¹)`.
//!
//! When the altitude is known (planar search) the vertical row and column of
//! `G` are removed before inversion and only the horizontal terms enter the
//! bound.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_distance, Knowledge, Position3D};

/// `G` is reported singular above this condition number.
pub const MAX_CONDITION: f64 = 1e12;

/// `β = −10γ / ln 10`, the derivative scale of `10γ log10(d0/d)` w.r.t. `ln d`.
pub fn beta(gamma: f64) -> f64 {
    -10.0 * gamma / std::f64::consts::LN_10
}

/// Gradients of the stacked model means with respect to x, y and z of `u1`.
/// Each vector has `K·N` entries in row-major `(k, n)` order.
pub fn gradient_vectors(u1: Position3D, knowledge: &Knowledge) -> Result<[Vec<f64>; 3]> {
    let b = beta(knowledge.gamma);
    let cells = knowledge.samples() * knowledge.stations();
    let mut grads = [
        Vec::with_capacity(cells),
        Vec::with_capacity(cells),
        Vec::with_capacity(cells),
    ];
    for &disp in knowledge.trajectory.displacements() {
        for &bs in &knowledge.base_stations {
            let offset = u1 + disp - bs;
            check_distance(offset.norm(), knowledge.d_min)?;
            let d2 = offset.norm_squared();
            for (axis, g) in grads.iter_mut().enumerate() {
                g.push(b * offset.component(axis) / d2);
            }
        }
    }
    Ok(grads)
}

/// Fisher information (up to the `σ⁻²` factor) for `u1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherMatrix {
    pub g: [[f64; 3]; 3],
    pub p: [[f64; 3]; 3],
    pub q: [[f64; 3]; 3],
    pub beta: f64,
}

impl FisherMatrix {
    pub fn as_matrix3(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.g[i][j])
    }
}

/// `G = P − Q` with `P = Σ a_i a_j` and `Q = (Σ a_i)(Σ a_j) / NK`.
pub fn fisher_matrix(u1: Position3D, knowledge: &Knowledge) -> Result<FisherMatrix> {
    let grads = gradient_vectors(u1, knowledge)?;
    let count = grads[0].len() as f64;
    let sums = grads.each_ref().map(|g| g.iter().sum::<f64>());
    let mut p = [[0.0; 3]; 3];
    let mut q = [[0.0; 3]; 3];
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let pij: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum();
            let qij = sums[i] * sums[j] / count;
            p[i][j] = pij;
            p[j][i] = pij;
            q[i][j] = qij;
            q[j][i] = qij;
            g[i][j] = pij - qij;
            g[j][i] = pij - qij;
        }
    }
    Ok(FisherMatrix {
        g,
        p,
        q,
        beta: beta(knowledge.gamma),
    })
}

/// Which coordinates are unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    /// Altitude known; x and y only.
    Planar,
    /// Full 3D position.
    Volumetric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrlbReport {
    pub mode: BoundMode,
    pub sigma: f64,
    pub fisher: FisherMatrix,
    /// `σ² G⁻¹` over the unknown coordinates (2×2 planar, 3×3 volumetric), m².
    pub crlb_matrix: Vec<Vec<f64>>,
    /// Diagonal of `G⁻¹` over the unknown coordinates.
    pub inverse_diagonal: Vec<f64>,
    /// Determinant of the (reduced) `G`.
    pub h: f64,
    pub condition_number: f64,
    /// Lower bound on the RMS miss distance, meters.
    pub miss_distance_bound: f64,
    /// The bound applies to the joint estimator only.
    pub estimator: &'static str,
}

/// Diagonal of `G⁻¹` by cofactors, and `h = det G`.
pub fn cofactor_inverse_diagonal(g: &[[f64; 3]; 3]) -> ([f64; 3], f64) {
    let c11 = g[1][1] * g[2][2] - g[1][2] * g[1][2];
    let c22 = g[0][0] * g[2][2] - g[0][2] * g[0][2];
    let c33 = g[0][0] * g[1][1] - g[0][1] * g[0][1];
    let h = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[1][2])
        - g[0][1] * (g[0][1] * g[2][2] - g[0][2] * g[1][2])
        + g[0][2] * (g[0][1] * g[1][2] - g[0][2] * g[1][1]);
    ([c11 / h, c22 / h, c33 / h], h)
}

fn condition(eigenvalues: &[f64]) -> f64 {
    let max = eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn crlb_report(
    u1: Position3D,
    knowledge: &Knowledge,
    sigma: f64,
    mode: BoundMode,
) -> Result<CrlbReport> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(
            "sigma_db",
            "must be finite and non-negative",
        ));
    }
    let fisher = fisher_matrix(u1, knowledge)?;
    let g = &fisher.g;
    let s2 = sigma * sigma;

    let (crlb_matrix, inverse_diagonal, h, condition_number) = match mode {
        BoundMode::Volumetric => {
            let cond = condition(
                SymmetricEigen::new(fisher.as_matrix3())
                    .eigenvalues
                    .as_slice(),
            );
            if cond.is_nan() || cond > MAX_CONDITION {
                return Err(Error::SingularFisher { condition: cond });
            }
            let (diag, h) = cofactor_inverse_diagonal(g);
            let inv = fisher
                .as_matrix3()
                .try_inverse()
                .ok_or(Error::SingularFisher { condition: cond })?;
            let crlb = (0..3)
                .map(|i| (0..3).map(|j| s2 * inv[(i, j)]).collect())
                .collect();
            (crlb, diag.to_vec(), h, cond)
        }
        BoundMode::Planar => {
            let m = Matrix2::new(g[0][0], g[0][1], g[1][0], g[1][1]);
            let cond = condition(SymmetricEigen::new(m).eigenvalues.as_slice());
            if cond.is_nan() || cond > MAX_CONDITION {
                return Err(Error::SingularFisher { condition: cond });
            }
            let h = g[0][0] * g[1][1] - g[0][1] * g[0][1];
            let diag = vec![g[1][1] / h, g[0][0] / h];
            let off = -g[0][1] / h;
            let crlb = vec![vec![s2 * diag[0], s2 * off], vec![s2 * off, s2 * diag[1]]];
            (crlb, diag, h, cond)
        }
    };

    let miss_distance_bound = sigma * inverse_diagonal.iter().sum::<f64>().sqrt();
    Ok(CrlbReport {
        mode,
        sigma,
        fisher,
        crlb_matrix,
        inverse_diagonal,
        h,
        condition_number,
        miss_distance_bound,
        estimator: "joint",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hexagon_scenario, Vec3};

    #[test]
    fn beta_for_exponent_3_3() {
        assert!((beta(3.3) - (-14.331_717_902_807_31)).abs() < 1e-12);
    }

    #[test]
    fn overhead_station_has_zero_horizontal_gradient() {
        let s = hexagon_scenario();
        let k = s.knowledge();
        // UAV directly above station 0 at k = 0.
        let u1 = Vec3::new(1000.0, 0.0, 100.0);
        let g = gradient_vectors(u1, &k).unwrap();
        assert_eq!(g[0][0], 0.0);
        assert_eq!(g[1][0], 0.0);
        assert!(g[2][0] < 0.0);
    }

    #[test]
    fn single_measurement_has_no_information() {
        let s = hexagon_scenario();
        let one = crate::model::Scenario::new(
            vec![s.base_stations[0]],
            crate::model::TrajectoryKnowledge::stationary(),
            s.path_loss,
            crate::model::NoiseModel::homogeneous(1, 1, 1.0).unwrap(),
            s.true_u1,
        )
        .unwrap();
        let f = fisher_matrix(one.true_u1, &one.knowledge()).unwrap();
        assert_eq!(f.p, f.q);
        assert_eq!(f.g, [[0.0; 3]; 3]);
        assert!(matches!(
            crlb_report(one.true_u1, &one.knowledge(), 1.0, BoundMode::Planar),
            Err(Error::SingularFisher { .. })
        ));
    }

    #[test]
    fn fisher_is_symmetric_and_p_minus_q() {
        let s = hexagon_scenario();
        let f = fisher_matrix(Vec3::new(-120.0, 340.0, 100.0), &s.knowledge()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(f.g[i][j], f.g[j][i]);
                assert_eq!(f.g[i][j], f.p[i][j] - f.q[i][j]);
            }
        }
    }

    #[test]
    fn bound_is_linear_in_sigma() {
        let s = hexagon_scenario();
        let k = s.knowledge();
        let one = crlb_report(s.true_u1, &k, 3.0, BoundMode::Planar).unwrap();
        let two = crlb_report(s.true_u1, &k, 6.0, BoundMode::Planar).unwrap();
        assert_eq!(two.miss_distance_bound, 2.0 * one.miss_distance_bound);
    }

    #[test]
    fn hexagon_planar_bound() {
        let s = hexagon_scenario();
        let r = crlb_report(s.true_u1, &s.knowledge(), 1.0, BoundMode::Planar).unwrap();
        // Independent numpy evaluation of the same formulas.
        assert!(
            (r.miss_distance_bound - 17.445_855_345_662_85).abs() < 1e-6,
            "{}",
            r.miss_distance_bound
        );
    }

    #[test]
    fn coplanar_single_snapshot_is_singular_in_3d() {
        // All stations at one height, one snapshot: z is unobservable to first order.
        let s = hexagon_scenario().truncated(1).unwrap();
        let err = crlb_report(s.true_u1, &s.knowledge(), 6.0, BoundMode::Volumetric).unwrap_err();
        assert!(matches!(err, Error::SingularFisher { .. }));
    }

    #[test]
    fn degenerate_geometry_propagates() {
        let s = hexagon_scenario();
        let err = gradient_vectors(Vec3::new(1000.0, 0.0, 20.0), &s.knowledge()).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { .. }));
    }
}
