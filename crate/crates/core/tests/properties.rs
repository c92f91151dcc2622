mod common;

use common::path_instance;
use egocal::geom::{exp_so3, log_so3, project_to_so3, random_rotation};
use egocal::par::trial_rng;
use egocal::sim::random_extrinsic;
use egocal::solver::{evaluate_cost, local_solve, LocalOptions};
use egocal::{calibrate, CalibrateOptions, ConstraintKind, Transform};
use nalgebra::Vector3;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ConstraintKind> {
    prop::sample::select(ConstraintKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noise_free_paths_are_recovered(seed in 0u64..10_000, n in 5usize..60) {
        let (m, theta) = path_instance(seed, n, 0.0, 0.0);
        let r = calibrate(&m, &CalibrateOptions::default()).unwrap();
        prop_assert!(r.certificate.is_certified());
        prop_assert!((r.extrinsic.rotation.matrix() - theta.rotation.matrix()).norm() < 1e-6);
        prop_assert!((r.extrinsic.translation - theta.translation).norm() < 1e-6);
    }

    #[test]
    fn certified_estimates_are_not_beaten(seed in 0u64..10_000, sigma in 0.0f64..0.1, kind in kind()) {
        let (m, _) = path_instance(seed, 30, sigma, sigma);
        let r = calibrate(&m, &CalibrateOptions::with_constraints(kind)).unwrap();
        prop_assert!(r.certificate.gap <= 1e-7 * (1.0 + r.cost) || !r.certificate.is_certified());
        prop_assert!(r.certificate.dual_bound <= r.cost + 1e-9 * (1.0 + r.cost));
        if r.certificate.is_certified() {
            let mut rng = trial_rng(seed, 99);
            for _ in 0..5 {
                let init = random_extrinsic(&mut rng);
                if let Ok(l) = local_solve(&m, &init, &LocalOptions::default()) {
                    prop_assert!(l.cost >= r.cost - 1e-6 * (1.0 + r.cost));
                }
            }
        }
    }

    #[test]
    fn weights_scale_the_cost_not_the_estimate(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let (m, _) = path_instance(seed, 20, 0.03, 0.03);
        let opts = CalibrateOptions::default();
        let a = calibrate(&m, &opts).unwrap();
        let b = calibrate(&m.scaled_weights(c), &opts).unwrap();
        prop_assert!((b.cost - c * a.cost).abs() <= 1e-8 * (1.0 + c * a.cost));
        prop_assert!((a.extrinsic.rotation.matrix() - b.extrinsic.rotation.matrix()).norm() < 1e-6);
        prop_assert_eq!(a.certificate.verdict, b.certificate.verdict);
    }

    #[test]
    fn cost_is_non_negative_and_vanishes_on_consistent_data(seed in 0u64..10_000) {
        let (m, theta) = path_instance(seed, 10, 0.0, 0.0);
        prop_assert!(evaluate_cost(&m, &theta) < 1e-20 * (1.0 + m.len() as f64) + 1e-18);
        let other = random_extrinsic(&mut trial_rng(seed, 3));
        prop_assert!(evaluate_cost(&m, &other) >= 0.0);
    }

    #[test]
    fn rotation_maps_round_trip(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let v = Vector3::new(x, y, z);
        prop_assume!(v.norm() < 3.1);
        let r = exp_so3(&v);
        prop_assert!((log_so3(&r) - v).norm() < 1e-9);
        let p = project_to_so3(r.matrix()).unwrap();
        prop_assert!((p.matrix() - r.matrix()).norm() < 1e-12);
    }

    #[test]
    fn composing_with_the_inverse_gives_identity(seed in 0u64..10_000) {
        let t = Transform::new(random_rotation(seed), Vector3::new(1.0, -2.0, 0.5) * (seed % 7) as f64);
        let e = t.compose(&t.inverse());
        prop_assert!((e.rotation.matrix() - nalgebra::Matrix3::identity()).norm() < 1e-12);
        prop_assert!(e.translation.norm() < 1e-12 * (1.0 + t.translation.norm()));
    }
}
