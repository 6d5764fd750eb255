//! Property tests of the structural invariants.

use ipf_core::filter::{resample, Ensemble};
use ipf_core::ident::statistic_t;
use ipf_core::model::{euler_step, SdeModel};
use ipf_core::oracle::{equal_probability_partition, QuadraturePosterior};
use ipf_core::rng::{stream, StreamKind};
use ipf_core::sampler::{solve_algorithm_b, static_objective, SolveOptions};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn euler_step_is_affine_in_noise(
        x0 in -2.0f64..2.0,
        sigma in 0.01f64..1.0,
        alpha in -3.0f64..3.0,
        xi in -3.0f64..3.0,
    ) {
        let m = SdeModel::scalar(|x| -10.0 * x * (x * x - 0.5), sigma, 0.01, false);
        let base = euler_step(&m, &[x0], 0.0, &[0.0])[0];
        let unit = euler_step(&m, &[x0], 0.0, &[xi])[0] - base;
        let scaled = euler_step(&m, &[x0], 0.0, &[alpha * xi])[0] - base;
        prop_assert!((scaled - alpha * unit).abs() <= 1e-12 * (1.0 + unit.abs() * alpha.abs()));
    }

    #[test]
    fn branch_solve_contract(
        mean in -1.0f64..1.0,
        var in 0.001f64..0.5,
        b in -2.0f64..2.0,
        s in 0.01f64..0.5,
        xi in -4.0f64..4.0,
    ) {
        // affine observation keeps the objective U-shaped for any draw
        let obj = static_objective(var, s, b, |x| x, |_| 1.0, true);
        let _ = mean;
        let sol = solve_algorithm_b(&obj, &[xi], SolveOptions::default()).unwrap();
        // residual contract
        prop_assert!(sol.residual <= 1e-10);
        // branch contract: position on the xi side of the minimum
        let z = (b / s) / (1.0 / var + 1.0 / s);
        if xi != 0.0 {
            prop_assert_eq!((sol.position[0] - z) > 0.0, xi > 0.0);
        }
    }

    #[test]
    fn resampled_weights_are_uniform(
        n in 1usize..40,
        seed in 0u64..1000,
    ) {
        let positions: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let mut ens = Ensemble::from_positions(&positions, 0);
        for i in 0..n {
            ens.scale_log_weight(i, (i as f64).sin() * 5.0);
        }
        let w = ens.normalized_weights();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = stream(seed, StreamKind::Resample, 0, 0);
        resample(&mut ens, &mut rng);
        let w = ens.normalized_weights();
        for wi in w {
            prop_assert!((wi - 1.0 / n as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn statistic_is_bounded_by_scale(
        d in prop::collection::vec(-10.0f64..10.0, 3..200),
        c in -8.0f64..8.0,
    ) {
        match statistic_t(&d, c) {
            Ok(t) => prop_assert!(t.abs() <= c.abs() + 1e-12),
            Err(_) => prop_assert!(d.iter().all(|v| *v == 0.0) || d.len() < 3),
        }
    }

    #[test]
    fn partition_is_strictly_increasing(
        mu in -2.0f64..2.0,
        sd in 0.05f64..1.5,
        k in 2usize..20,
    ) {
        let q = QuadraturePosterior::build(
            |x| (x - mu) * (x - mu) / (2.0 * sd * sd),
            mu - 12.0 * sd,
            mu + 12.0 * sd,
            20_001,
        )
        .unwrap();
        let part = equal_probability_partition(&q, k);
        for w in part.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
    }
}
