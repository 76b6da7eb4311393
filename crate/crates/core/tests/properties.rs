use approx::assert_relative_eq;
use proptest::prelude::*;

use uavloc::crlb::{crlb_report, fisher_matrix, BoundMode};
use uavloc::estimators::{alpha_hat, fuse, fuse_recursive, objective, ObjectiveSlice};
use uavloc::model::{
    distance, path_gain_db, synthesize, virtual_bs_position, NoiseModel, PathLossParams, Scenario,
    ScenarioFile, TrajectoryKnowledge, Vec3,
};
use uavloc::montecarlo::percentile;

fn vec3(range: f64, z: std::ops::Range<f64>) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, z).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn trajectory(max_samples: usize) -> impl Strategy<Value = TrajectoryKnowledge> {
    prop::collection::vec((vec3(25.0, -3.0..3.0), 0.1f64..10.0), 1..=max_samples).prop_map(
        |steps| {
            let (v, dt) = steps.into_iter().unzip();
            TrajectoryKnowledge::new(v, dt).unwrap()
        },
    )
}

/// Scenarios whose true position keeps at least 20 m from every virtual
/// station; rejected draws are retried by proptest.
fn scenario() -> impl Strategy<Value = Scenario> {
    (
        prop::collection::vec(vec3(1500.0, 0.0..200.0), 2..7),
        trajectory(8),
        2.0f64..5.0,
        0.5f64..10.0,
        vec3(800.0, 50.0..300.0),
    )
        .prop_filter_map("degenerate geometry", |(bs, traj, gamma, sigma, u1)| {
            let (k, n) = (traj.len(), bs.len());
            Scenario::with_d_min(
                bs,
                traj,
                PathLossParams::new(gamma, 1.0, -30.0).unwrap(),
                NoiseModel::homogeneous(k, n, sigma).unwrap(),
                u1,
                20.0,
            )
            .ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn virtual_station_matches_moving_uav(s in scenario()) {
        for k in 0..s.samples() {
            let uav = s.true_position(k).unwrap();
            for &bs in &s.base_stations {
                let moving = uav.distance(bs);
                let virtual_bs = virtual_bs_position(bs, &s.trajectory, k).unwrap();
                assert_relative_eq!(s.true_u1.distance(virtual_bs), moving, max_relative = 1e-12);
                assert_relative_eq!(distance(s.true_u1, bs, &s.trajectory, k, s.d_min).unwrap(), moving, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn displacements_are_prefix_sums(t in trajectory(20)) {
        let d = t.displacements();
        prop_assert_eq!(d[0], Vec3::ZERO);
        for k in 1..t.len() {
            let step = t.velocities()[k - 1] * t.intervals()[k - 1];
            let diff = d[k] - d[k - 1];
            prop_assert!((diff - step).norm() <= 1e-9 * (1.0 + d[k].norm()));
        }
    }

    #[test]
    fn path_gain_decreases_with_distance(d in 1.0f64..1e4, ratio in 1.001f64..100.0, gamma in 2.0f64..5.0) {
        prop_assert!(path_gain_db(d * ratio, gamma, 1.0) < path_gain_db(d, gamma, 1.0));
        assert_relative_eq!(
            path_gain_db(d, gamma, 1.0) - path_gain_db(d * 10.0, gamma, 1.0),
            10.0 * gamma,
            max_relative = 1e-9
        );
    }

    #[test]
    fn fisher_matrix_is_symmetric_psd(s in scenario()) {
        let f = fisher_matrix(s.true_u1, &s.knowledge()).unwrap();
        let g = f.as_matrix3();
        let scale = g.abs().max();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(f.g[i][j], f.g[j][i]);
            }
        }
        let min = g.symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-10 * scale, "min eigenvalue {} scale {}", min, scale);
    }

    #[test]
    fn bound_is_linear_in_sigma(s in scenario(), sigma in 0.1f64..20.0) {
        let k = s.knowledge();
        if let Ok(a) = crlb_report(s.true_u1, &k, sigma, BoundMode::Planar) {
            let b = crlb_report(s.true_u1, &k, 2.0 * sigma, BoundMode::Planar).unwrap();
            prop_assert_eq!(b.miss_distance_bound, 2.0 * a.miss_distance_bound);
            // Knowing the altitude never hurts.
            if let Ok(v) = crlb_report(s.true_u1, &k, sigma, BoundMode::Volumetric) {
                prop_assert!(v.miss_distance_bound >= a.miss_distance_bound * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn objective_ignores_common_offset(s in scenario(), seed: u64, c in -50.0f64..50.0, probe in vec3(800.0, 50.0..300.0)) {
        let k = s.knowledge();
        let rss = synthesize(&s, seed).unwrap();
        let shifted = rss.shifted(c);
        for slice in [ObjectiveSlice::All, ObjectiveSlice::Station(0), ObjectiveSlice::Time(0)] {
            let (Ok(a), Ok(b)) = (objective(probe, &rss, &k, slice), objective(probe, &shifted, &k, slice)) else {
                continue;
            };
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a), "{} vs {}", a, b);
        }
    }

    #[test]
    fn alpha_hat_is_shift_equivariant(r in prop::collection::vec(-120.0f64..-20.0, 2..40), c in -50.0f64..50.0) {
        let w = vec![1.0; r.len()];
        let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
        let a = alpha_hat(&r, &w).unwrap();
        assert_relative_eq!(alpha_hat(&shifted, &w).unwrap(), a + c, epsilon = 1e-9);
        prop_assert!(a >= r.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-9);
        prop_assert!(a <= r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-9);
    }

    #[test]
    fn fusion_forms_agree(points in prop::collection::vec(vec3(1000.0, 0.0..300.0), 1..20)) {
        let a = fuse(points.iter().copied());
        let b = fuse_recursive(points.iter().copied());
        prop_assert!((a - b).norm() <= 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn percentile_is_bounded_and_monotone(v in prop::collection::vec(0.0f64..1e3, 1..50), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = (p.min(q), p.max(q));
        let a = percentile(&v, lo).unwrap();
        let b = percentile(&v, hi).unwrap();
        prop_assert!(a <= b);
        prop_assert!(a >= v.iter().cloned().fold(f64::INFINITY, f64::min));
        prop_assert!(b <= v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn scenario_files_round_trip(s in scenario()) {
        let text = ScenarioFile::from_scenario(&s).to_json();
        let back = ScenarioFile::from_json(&text).unwrap().into_scenario().unwrap();
        prop_assert_eq!(ScenarioFile::from_scenario(&back).to_json(), text);
    }
}
