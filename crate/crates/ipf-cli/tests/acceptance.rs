//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see the lines for passing criteria).
//!
//! Criterion 7 is expected to fail at one entry: the published reference
//! value .995 at b = 1.5 disagrees with the true quadrature mean 1.0043 of
//! the stated density (see the assert message for the cross-checks).

use std::time::Instant;

use ipf_cli::experiments::{
    ident_trials, means_table, rn_table, table1, IdentTableConfig, MeansTableConfig, RnTableConfig,
    Table1Config,
};
use ipf_core::oracle::QuadraturePosterior;
use ipf_core::rng::{stream, StreamKind};
use ipf_core::sampler::{
    find_minimum_scalar, jacobian_fd, jacobian_implicit_1d, solve_random_direction,
    static_objective, PreparedSampler, QuadraticForm, SolveOptions,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn report(criterion: usize, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_double_well_tracking_bands() {
    let started = Instant::now();
    let cfg = Table1Config {
        seed: 7,
        repeats: 1000,
        particle_counts: vec![50, 1],
        threads: 1,
        ..Table1Config::default()
    };
    let rows = table1(&cfg).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let r50 = &rows[0];
    let r1 = &rows[1];
    let pass = r50.mean.abs() < 0.01
        && (0.012..=0.035).contains(&r50.variance)
        && (0.02..=0.06).contains(&r1.variance)
        && elapsed < 120.0;
    report(
        1,
        pass,
        &format!(
            "M=50: mean {:+.5} (|.|<0.01), var {:.4} (in [0.012,0.035]); M=1: var {:.4} (in [0.02,0.06]); {:.1}s single-threaded (<120s)",
            r50.mean, r50.variance, r1.variance, elapsed
        ),
    );
}

#[test]
fn criterion_2_histogram_flatness() {
    let rows = rn_table(&RnTableConfig::table2()).unwrap();
    let bin1_std = rows[0].freq_standard;
    let imp_min = rows
        .iter()
        .map(|r| r.freq_implicit)
        .fold(f64::INFINITY, f64::min);
    let imp_max = rows
        .iter()
        .map(|r| r.freq_implicit)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = bin1_std >= 0.95 && imp_min >= 0.07 && imp_max <= 0.13;
    report(
        2,
        pass,
        &format!(
            "standard bin 1 = {bin1_std:.4} (>=0.95); implicit bins in [{imp_min:.4}, {imp_max:.4}] (within 0.1±0.03)"
        ),
    );
}

#[test]
fn criterion_3_linear_means() {
    let rows = means_table(&MeansTableConfig::table3()).unwrap();
    let mut worst = 0.0f64;
    for r in &rows {
        worst = worst.max((r.implicit - r.b / 2.0).abs());
    }
    let last = rows.last().unwrap();
    let standard_gap = (last.standard - last.exact).abs();
    let pass = worst <= 0.05 && standard_gap > 0.2;
    report(
        3,
        pass,
        &format!(
            "implicit max |error| = {worst:.4} (<=0.05 vs exact b/2); standard at b=2 off by {standard_gap:.3} (>0.2)"
        ),
    );
}

#[test]
fn criterion_4_cubic_means() {
    // implicit column: averaged estimates against the quadrature values
    let cfg = MeansTableConfig {
        repeats: 20,
        ..MeansTableConfig::table5()
    };
    let rows = means_table(&cfg).unwrap();
    let mut worst = 0.0f64;
    for r in &rows {
        worst = worst.max((r.implicit - r.exact).abs());
    }
    // prior-proposal breakdown: one 1000-particle run, the published setting
    let single = means_table(&MeansTableConfig {
        repeats: 1,
        bs: vec![2.5],
        ..MeansTableConfig::table5()
    })
    .unwrap();
    let standard_err = (single[0].exact - single[0].standard).abs();
    let pass = worst <= 0.03 && standard_err > 0.3;
    report(
        4,
        pass,
        &format!(
            "implicit max |error| = {worst:.4} (<=0.03 vs quadrature); standard single-run error at b=2.5 = {standard_err:.3} (>0.3)"
        ),
    );
}

#[test]
fn criterion_5_identification_band() {
    let cfg = IdentTableConfig {
        seed: 21,
        max_iterations: 15,
        ..IdentTableConfig::default()
    };
    let finals = ident_trials(&cfg, 20).unwrap();
    let in_band = finals.iter().filter(|f| (0.9..=1.5).contains(*f)).count();
    let pass = in_band >= 16;
    report(
        5,
        pass,
        &format!(
            "{in_band}/20 trials ended in [0.9, 1.5]·sigma* after <=15 iterations (need >=16); finals {:?}",
            finals.iter().map(|f| (f * 100.0).round() / 100.0).collect::<Vec<f64>>()
        ),
    );
}

#[test]
fn criterion_6_exactness_suite() {
    let opts = SolveOptions::default();
    let n = 100_000usize;

    // linear objective: weighted CDF vs quadrature, equal weights
    let (sigma, s, b) = (0.1, 0.1, 2.0);
    let obj = static_objective(sigma, s, b, |x| x, |_| 1.0, true);
    let prep = PreparedSampler::prepare(&obj, opts).unwrap();
    let quad = QuadraturePosterior::auto(
        move |x: f64| x * x / (2.0 * sigma) + (x - b) * (x - b) / (2.0 * s),
        -6.0,
        6.0,
        100_001,
    )
    .unwrap();
    let mut samples = Vec::with_capacity(n);
    let mut max_rel_weight_spread = 0.0f64;
    let mut max_residual = 0.0f64;
    let mut w0 = None;
    for i in 0..n {
        let mut rng = stream(61, StreamKind::Static, i as u64, 0);
        let xi: f64 = rng.sample(StandardNormal);
        let sol = prep.draw(&[xi], opts).unwrap();
        max_residual = max_residual.max(sol.residual);
        let w = (-sol.phi + sol.log_jacobian).exp();
        let base = *w0.get_or_insert(w);
        max_rel_weight_spread = max_rel_weight_spread.max((w - base).abs() / base);
        samples.push((sol.position[0], w));
    }
    let ks_linear = quad.ks_distance(&samples);

    // cubic objective through the substitute route
    let b3 = 1.5;
    let obj3 = static_objective(sigma, s, b3, |x| x * x * x, |x| 3.0 * x * x, false);
    let prep3 = PreparedSampler::prepare(&obj3, opts).unwrap();
    let quad3 = QuadraturePosterior::auto(
        move |x: f64| {
            let r = x * x * x - b3;
            x * x / (2.0 * sigma) + r * r / (2.0 * s)
        },
        -6.0,
        6.0,
        100_001,
    )
    .unwrap();
    let mut samples3 = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(67, StreamKind::Static, i as u64, 0);
        let xi: f64 = rng.sample(StandardNormal);
        let sol = prep3.draw(&[xi], opts).unwrap();
        max_residual = max_residual.max(sol.residual);
        samples3.push((sol.position[0], (-sol.phi + sol.log_jacobian).exp()));
    }
    let ks_cubic = quad3.ks_distance(&samples3);

    // Jacobian route agreement on the convex cubic
    let objc = static_objective(sigma, s, 0.5, |x| x * x * x, |x| 3.0 * x * x, false);
    let tight = SolveOptions {
        tol: 1e-13,
        max_iter: 200,
    };
    let prepc = PreparedSampler::prepare(&objc, tight).unwrap();
    let (z, _) = find_minimum_scalar(&objc.components[0]).unwrap();
    let mut max_jac_rel = 0.0f64;
    for xi in [-1.8, -0.6, 0.4, 1.3, 2.2] {
        let sol = prepc.draw(&[xi], tight).unwrap();
        let j_impl = jacobian_implicit_1d(&objc, sol.position[0], xi, z).unwrap();
        let base = sol.position.clone();
        let j_fd = jacobian_fd(
            |x| {
                prepc
                    .draw_with_hint(x, tight, Some(&base))
                    .map(|s| s.position)
            },
            &[xi],
            1e-4,
        )
        .unwrap();
        max_jac_rel = max_jac_rel.max((j_impl - j_fd).abs() / j_impl);
    }

    // random-direction solve in four dimensions vs the direct Gaussian oracle
    let m = 4usize;
    let mut rng = stream(71, StreamKind::Static, 0, 0);
    let mut bmat = vec![0.0; m * m];
    for v in bmat.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    let mut amat = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += bmat[k * m + i] * bmat[k * m + j];
            }
            amat[i * m + j] = acc + if i == j { 0.5 } else { 0.0 };
        }
    }
    let center = vec![0.4, -0.9, 1.3, 0.0];
    let q = QuadraticForm::new(center.clone(), amat, 0.0).unwrap();
    let mut lw = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = stream(73, StreamKind::Static, i as u64, 0);
        let xi: Vec<f64> = (0..m).map(|_| r.sample(StandardNormal)).collect();
        let sol = solve_random_direction(&q, &xi);
        lw.push(-sol.phi + sol.log_jacobian);
        pos.push(sol.position);
    }
    let maxlw = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let wsum: f64 = lw.iter().map(|v| (v - maxlw).exp()).sum();
    let wsq: f64 = lw.iter().map(|v| (v - maxlw).exp().powi(2)).sum();
    let ess = wsum * wsum / wsq;
    let mut rd_ok = true;
    let mut rd_detail = String::new();
    for d in 0..m {
        let mean: f64 = lw
            .iter()
            .zip(&pos)
            .map(|(v, p)| (v - maxlw).exp() * p[d])
            .sum::<f64>()
            / wsum;
        let var: f64 = lw
            .iter()
            .zip(&pos)
            .map(|(v, p)| (v - maxlw).exp() * (p[d] - mean) * (p[d] - mean))
            .sum::<f64>()
            / wsum;
        let se = (var / ess).sqrt();
        if (mean - center[d]).abs() >= 3.0 * se {
            rd_ok = false;
        }
        rd_detail = format!("{rd_detail}{:.1}se ", (mean - center[d]).abs() / se);
    }

    let pass = ks_linear < 0.01
        && ks_cubic < 0.01
        && max_rel_weight_spread <= 1e-10
        && max_jac_rel < 1e-5
        && max_residual <= 1e-10
        && rd_ok;
    report(
        6,
        pass,
        &format!(
            "KS linear {ks_linear:.4} (<0.01), KS cubic+substitute {ks_cubic:.4} (<0.01), weight spread {max_rel_weight_spread:.2e} (<=1e-10), Jacobian route mismatch {max_jac_rel:.2e} (<1e-5), worst residual {max_residual:.2e} (<=1e-10), random-direction mean offsets {rd_detail}(each <3se)"
        ),
    );
}

#[test]
fn criterion_7_quadrature_reference_means() {
    // tabulated reference means for b = 0.5 .. 2.5 at three printed digits
    let reference = [
        (0.5, 0.109),
        (1.0, 0.442),
        (1.5, 0.995),
        (2.0, 1.18),
        (2.5, 1.30),
    ];
    let mut detail = String::new();
    let mut pass = true;
    for (b, expect) in reference {
        let q = QuadraturePosterior::auto(
            move |x: f64| {
                let r = x * x * x - b;
                x * x / 0.2 + r * r / 0.2
            },
            -8.0,
            8.0,
            100_001,
        )
        .unwrap();
        let mean = q.mean();
        let ok = (mean - expect).abs() <= 0.005;
        pass &= ok;
        detail.push_str(&format!(
            "b={b}: {mean:.4} vs {expect} {}; ",
            if ok { "ok" } else { "OFF" }
        ));
    }
    report(
        7,
        pass,
        &format!(
            "{detail}| the b=1.5 entry cannot match: the quadrature mean of \
             exp(-(x^2/0.2+(x^3-1.5)^2/0.2)) is 1.0043 (confirmed by adaptive \
             quadrature, trapezoid refinement at 4e5 points, and grid doubling; \
             the same convention reproduces the non-U-shape threshold |b|>=0.77 \
             and the four other entries to <=0.002), so the tabulated .995 is \
             off by 0.009 at that entry"
        ),
    );
}
