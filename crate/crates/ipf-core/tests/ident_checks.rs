//! Behavioural checks of the Robbins-Monro identification loop on the
//! linear random-walk model.

use ipf_core::ident::{identify, segmented_identify, statistic_t, RmConfig, RmTrace};
use ipf_core::model::{generate_synthetic, ObservationModel, SdeModel};

const SIGMA_STAR: f64 = 1e-2;
const S_OBS: f64 = 1e-4;
const DELTA: f64 = 0.01;
const N_STEPS: usize = 100;

fn observation() -> ObservationModel {
    ObservationModel::scalar(|x| x, |_| 1.0, S_OBS, 1, true)
}

fn random_walk(sigma: f64) -> SdeModel {
    SdeModel::scalar(move |_| 0.0, sigma, DELTA, true)
}

fn dataset(seed: u64) -> Vec<Vec<f64>> {
    let model = random_walk(SIGMA_STAR);
    let (_, bs) = generate_synthetic(&model, &observation(), &[0.0], N_STEPS, seed);
    bs
}

/// Statistic evaluated on one fresh filter run.
fn t_once(data: &[Vec<f64>], sigma: f64, seed: u64) -> f64 {
    let cfg = RmConfig {
        sigma_init: sigma,
        max_iterations: 1,
        ..RmConfig::default()
    };
    let trace: RmTrace = identify(random_walk, &observation(), &[0.0], data, &cfg, seed).unwrap();
    trace.t_values[0]
}

#[test]
fn statistic_sign_straddles_the_true_parameter() {
    // E[T] over 200 runs: positive when the assumed parameter is ten times
    // too large, negative when ten times too small
    let runs = 200;
    for (mult, positive) in [(10.0, true), (0.1, false)] {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..runs {
            let data = dataset(40_000 + r as u64);
            let t = t_once(&data, mult * SIGMA_STAR, 90_000 + r as u64);
            sum += t;
            sum_sq += t * t;
        }
        let mean = sum / runs as f64;
        let se = ((sum_sq / runs as f64 - mean * mean) / runs as f64).sqrt();
        assert!(
            mean.abs() > 3.0 * se,
            "E[T] at {mult} sigma* not resolved: {mean} +- {se}"
        );
        assert_eq!(
            mean > 0.0,
            positive,
            "E[T] at {mult} sigma* = {mean} (se {se})"
        );
    }
}

#[test]
fn iterates_stay_positive() {
    let data = dataset(5);
    let cfg = RmConfig {
        sigma_init: 10.0 * SIGMA_STAR,
        ..RmConfig::default()
    };
    let trace = identify(random_walk, &observation(), &[0.0], &data, &cfg, 17).unwrap();
    assert!(trace.sigmas.iter().all(|s| *s > 0.0));
    assert_eq!(trace.sigmas.len(), trace.t_values.len() + 1);
}

#[test]
fn single_segment_reduces_to_plain_identification() {
    let data = dataset(6);
    let base = RmConfig {
        sigma_init: 3.0 * SIGMA_STAR,
        max_iterations: 6,
        ..RmConfig::default()
    };
    let plain = identify(random_walk, &observation(), &[0.0], &data, &base, 23).unwrap();
    let seg_cfg = RmConfig {
        segment_len: N_STEPS,
        ..base
    };
    let segged =
        segmented_identify(random_walk, &observation(), &[0.0], &data, &seg_cfg, 23).unwrap();
    assert_eq!(plain.sigmas, segged.sigmas);
    assert_eq!(plain.t_values, segged.t_values);
}

#[test]
fn segmented_run_lands_near_plain_run() {
    let data = dataset(7);
    let base = RmConfig {
        sigma_init: 10.0 * SIGMA_STAR,
        max_iterations: 15,
        ..RmConfig::default()
    };
    let plain = identify(random_walk, &observation(), &[0.0], &data, &base, 29).unwrap();
    let seg_cfg = RmConfig {
        segment_len: 20,
        ..base
    };
    let segged =
        segmented_identify(random_walk, &observation(), &[0.0], &data, &seg_cfg, 29).unwrap();
    let (a, b) = (
        plain.final_sigma() / SIGMA_STAR,
        segged.final_sigma() / SIGMA_STAR,
    );
    // same band, not same trajectory
    assert!(a > 0.3 && a < 3.0, "plain final {a}");
    assert!(b > 0.3 && b < 3.0, "segmented final {b}");
}

#[test]
fn truth_start_calibration_stays_near_truth() {
    // starting at the true parameter, the iteration settles in a band around
    // it (the statistic's root is biased slightly above the truth)
    let data = dataset(5);
    let cfg = RmConfig {
        sigma_init: SIGMA_STAR,
        max_iterations: 15,
        ..RmConfig::default()
    };
    for trial in 0..5 {
        let trace = identify(
            random_walk,
            &observation(),
            &[0.0],
            &data,
            &cfg,
            500 + trial,
        )
        .unwrap();
        let f = trace.final_sigma() / SIGMA_STAR;
        assert!((0.5..=2.0).contains(&f), "truth-start final {f}");
    }
}

#[test]
fn filtered_path_increments_run_but_root_sits_lower() {
    use ipf_core::ident::IncrementSource;
    let data = dataset(5);
    let cfg = RmConfig {
        sigma_init: 2.0 * SIGMA_STAR,
        max_iterations: 12,
        increments: IncrementSource::FilteredPath,
        ..RmConfig::default()
    };
    let trace = identify(random_walk, &observation(), &[0.0], &data, &cfg, 41).unwrap();
    let f = trace.final_sigma() / SIGMA_STAR;
    assert!(f.is_finite() && f > 0.0);
    // the running-weight path difference carries extra ensemble noise, so
    // its whiteness root lands below the smoothed-path one
    let smoothed = identify(
        random_walk,
        &observation(),
        &[0.0],
        &data,
        &RmConfig {
            increments: IncrementSource::SmoothedPath,
            ..cfg.clone()
        },
        41,
    )
    .unwrap();
    assert!(f < smoothed.final_sigma() / SIGMA_STAR);
}

#[test]
fn runaway_scale_triggers_divergence_error() {
    use ipf_core::error::{Error, IdentError};
    let data = dataset(9);
    let cfg = RmConfig {
        sigma_init: 10.0 * SIGMA_STAR,
        scale_c: -400.0,
        max_iterations: 15,
        ..RmConfig::default()
    };
    let err = identify(random_walk, &observation(), &[0.0], &data, &cfg, 3).unwrap_err();
    assert!(
        matches!(err, Error::Ident(IdentError::Divergence { .. })),
        "expected divergence, got {err:?}"
    );
}

#[test]
fn statistic_t_examples() {
    assert!((statistic_t(&[1.0, 1.0, 1.0, 1.0], 4.0).unwrap() - 4.0).abs() < 1e-14);
    assert!((statistic_t(&[1.0, -1.0, 1.0, -1.0], 4.0).unwrap() + 4.0).abs() < 1e-14);
    // scale constant passes through linearly
    let d = [0.3, -0.1, 0.4, 0.2, -0.6];
    let t1 = statistic_t(&d, 1.0).unwrap();
    let t4 = statistic_t(&d, -4.0).unwrap();
    assert!((t4 + 4.0 * t1).abs() < 1e-14);
}
