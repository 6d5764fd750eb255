//! Named benchmark experiments: double-well tracking, equal-probability
//! histograms, posterior-mean comparisons, and noise-parameter
//! identification, each returning plain row structs for the CSV writers.

use anyhow::{Context, Result};
use rand::Rng;
use rand_distr::StandardNormal;

use ipf_core::filter::{run_filter, FilterConfig, Proposal};
use ipf_core::ident::{identify, RmConfig, RmTrace};
use ipf_core::model::{generate_synthetic, ObservationModel, SdeModel};
use ipf_core::oracle::{equal_probability_partition, QuadraturePosterior, RnHistogram};
use ipf_core::rng::{mix_seed, stream, StreamKind};
use ipf_core::sampler::{static_objective, PreparedSampler, SampleObjective, SolveOptions};

/// Run `n` independent jobs, serially when `threads == 1`, otherwise on a
/// dedicated pool. Results come back in job order either way.
pub fn run_jobs<T: Send>(
    threads: usize,
    n: usize,
    job: impl Fn(usize) -> T + Send + Sync,
) -> Vec<T> {
    if threads == 1 || n <= 1 {
        (0..n).map(job).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| (0..n).into_par_iter().map(job).collect())
    }
}

fn double_well_model(sigma: f64, delta: f64) -> SdeModel {
    SdeModel::scalar(|x| -10.0 * x * (x * x - 0.5), sigma, delta, true)
}

fn linear_obs(s: f64) -> ObservationModel {
    ObservationModel::scalar(|x| x, |_| 1.0, s, 1, true)
}

fn static_problem(sigma: f64, s: f64, b: f64, cubic: bool) -> SampleObjective {
    if cubic {
        static_objective(sigma, s, b, |x| x * x * x, |x| 3.0 * x * x, false)
    } else {
        static_objective(sigma, s, b, |x| x, |_| 1.0, true)
    }
}

fn static_quadrature(sigma: f64, s: f64, b: f64, cubic: bool) -> Result<QuadraturePosterior> {
    let q = QuadraturePosterior::auto(
        move |x: f64| {
            let r = if cubic { x * x * x - b } else { x - b };
            x * x / (2.0 * sigma) + r * r / (2.0 * s)
        },
        -8.0,
        8.0,
        100_001,
    )
    .context("quadrature grid")?;
    Ok(q)
}

// ---------------------------------------------------------------------------
// double-well tracking (table1)

#[derive(Debug, Clone)]
pub struct Table1Config {
    pub seed: u64,
    pub repeats: usize,
    pub particle_counts: Vec<usize>,
    pub sigma: f64,
    pub s: f64,
    pub delta: f64,
    pub n_steps: usize,
    pub threads: usize,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            seed: 7,
            repeats: 10_000,
            particle_counts: vec![100, 50, 20, 10, 5, 1],
            sigma: 0.1,
            s: 0.025,
            delta: 0.01,
            n_steps: 100,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table1Row {
    pub particles: usize,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

/// Mean and variance of the discrepancy between the observed path and its
/// reconstruction at the final time, per ensemble size.
pub fn table1(cfg: &Table1Config) -> Result<Vec<Table1Row>> {
    let mut rows = Vec::with_capacity(cfg.particle_counts.len());
    for (mi, &m) in cfg.particle_counts.iter().enumerate() {
        let deltas = run_jobs(cfg.threads, cfg.repeats, |r| {
            let model = double_well_model(cfg.sigma, cfg.delta);
            let obs = linear_obs(cfg.s);
            let data_seed = mix_seed(cfg.seed, r as u64);
            let (_, observations) =
                generate_synthetic(&model, &obs, &[0.0], cfg.n_steps, data_seed);
            let fc = FilterConfig::new(
                m,
                Proposal::ImplicitAutoFallback,
                mix_seed(mix_seed(cfg.seed, 0xF1 + mi as u64), r as u64),
            );
            let out = run_filter(&model, &obs, &observations, &[0.0], &fc)
                .expect("double-well tracking run");
            observations.last().unwrap()[0] - out.means.last().unwrap()[0]
        });
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let variance = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        rows.push(Table1Row {
            particles: m,
            mean,
            variance,
            se_mean: (variance / n).sqrt(),
            se_variance: variance * (2.0 / (n - 1.0)).sqrt(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// equal-probability histograms (table2, table4)

#[derive(Debug, Clone)]
pub struct RnTableConfig {
    pub seed: u64,
    pub samples: usize,
    pub bins: usize,
    pub b: f64,
    pub sigma: f64,
    pub s: f64,
    pub cubic: bool,
}

impl RnTableConfig {
    pub fn table2() -> Self {
        RnTableConfig {
            seed: 7,
            samples: 10_000,
            bins: 10,
            b: 2.0,
            sigma: 0.1,
            s: 0.1,
            cubic: false,
        }
    }

    pub fn table4() -> Self {
        RnTableConfig {
            b: 1.5,
            cubic: true,
            ..Self::table2()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RnTableRow {
    pub k: usize,
    pub y_k: f64,
    pub freq_standard: f64,
    pub freq_implicit: f64,
}

/// Frequencies with which prior-proposal and implicit-proposal samples land
/// in the posterior equal-probability intervals.
pub fn rn_table(cfg: &RnTableConfig) -> Result<Vec<RnTableRow>> {
    let quad = static_quadrature(cfg.sigma, cfg.s, cfg.b, cfg.cubic)?;
    let partition = equal_probability_partition(&quad, cfg.bins);
    let obj = static_problem(cfg.sigma, cfg.s, cfg.b, cfg.cubic);
    let opts = SolveOptions::default();
    let prep = PreparedSampler::prepare(&obj, opts)?;
    let mut hist_std = RnHistogram::new(partition.clone());
    let mut hist_imp = RnHistogram::new(partition.clone());
    let sd_prior = cfg.sigma.sqrt();
    for i in 0..cfg.samples {
        let mut rng = stream(cfg.seed, StreamKind::Static, i as u64, 0);
        let prior: f64 = sd_prior * rng.sample::<f64, _>(StandardNormal);
        hist_std.accumulate(prior, 1.0);
        let xi: f64 = rng.sample(StandardNormal);
        let sol = prep.draw(&[xi], opts)?;
        // positions are binned unweighted; the weights only enter the
        // flatness discussion
        hist_imp.accumulate(sol.position[0], 1.0);
    }
    let mut rows = Vec::with_capacity(cfg.bins);
    for k in 1..=cfg.bins {
        rows.push(RnTableRow {
            k,
            y_k: if k < cfg.bins {
                partition[k - 1]
            } else {
                f64::INFINITY
            },
            freq_standard: hist_std.frequencies[k - 1],
            freq_implicit: hist_imp.frequencies[k - 1],
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// posterior-mean comparisons (table3, table5)

#[derive(Debug, Clone)]
pub struct MeansTableConfig {
    pub seed: u64,
    pub particles: usize,
    pub repeats: usize,
    pub bs: Vec<f64>,
    pub sigma: f64,
    pub s: f64,
    pub cubic: bool,
    pub threads: usize,
}

impl MeansTableConfig {
    pub fn table3() -> Self {
        MeansTableConfig {
            seed: 7,
            particles: 30,
            repeats: 100,
            bs: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            sigma: 0.1,
            s: 0.1,
            cubic: false,
            threads: 0,
        }
    }

    pub fn table5() -> Self {
        MeansTableConfig {
            particles: 1000,
            bs: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5],
            cubic: true,
            ..Self::table3()
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeansTableRow {
    pub b: f64,
    pub exact: f64,
    pub standard: f64,
    pub implicit: f64,
    pub se_standard: f64,
    pub se_implicit: f64,
}

/// One repeat of the two estimators on a static problem; returns the pair of
/// weighted-mean estimates (standard, implicit).
fn estimate_once(
    obj_prep: &PreparedSampler,
    cfg: &MeansTableConfig,
    b: f64,
    repeat: usize,
) -> (f64, f64) {
    let opts = SolveOptions::default();
    let sd_prior = cfg.sigma.sqrt();
    let mut std_num = 0.0;
    let mut std_den = 0.0;
    let mut imp_num = 0.0;
    let mut imp_den = 0.0;
    for i in 0..cfg.particles {
        let mut rng = stream(
            mix_seed(cfg.seed, (b * 1e6) as u64),
            StreamKind::Static,
            i as u64,
            repeat as u64,
        );
        let x: f64 = sd_prior * rng.sample::<f64, _>(StandardNormal);
        let r = if cfg.cubic { x * x * x - b } else { x - b };
        let w = (-r * r / (2.0 * cfg.s)).exp();
        std_num += w * x;
        std_den += w;
        let xi: f64 = rng.sample(StandardNormal);
        let sol = obj_prep.draw(&[xi], opts).expect("implicit draw");
        let wi = (-sol.phi + sol.log_jacobian).exp();
        imp_num += wi * sol.position[0];
        imp_den += wi;
    }
    (std_num / std_den, imp_num / imp_den)
}

/// Weighted-mean estimates of the two filters against the quadrature value,
/// averaged over independent repeats.
pub fn means_table(cfg: &MeansTableConfig) -> Result<Vec<MeansTableRow>> {
    let mut rows = Vec::with_capacity(cfg.bs.len());
    for &b in &cfg.bs {
        let exact = static_quadrature(cfg.sigma, cfg.s, b, cfg.cubic)?.mean();
        let obj = static_problem(cfg.sigma, cfg.s, b, cfg.cubic);
        let prep = PreparedSampler::prepare(&obj, SolveOptions::default())?;
        let estimates = run_jobs(cfg.threads, cfg.repeats, |r| {
            estimate_once(&prep, cfg, b, r)
        });
        let n = estimates.len() as f64;
        let (mut ms, mut mi) = (0.0, 0.0);
        for (s_est, i_est) in &estimates {
            ms += s_est / n;
            mi += i_est / n;
        }
        let (mut vs, mut vi) = (0.0, 0.0);
        for (s_est, i_est) in &estimates {
            vs += (s_est - ms) * (s_est - ms) / (n - 1.0);
            vi += (i_est - mi) * (i_est - mi) / (n - 1.0);
        }
        rows.push(MeansTableRow {
            b,
            exact,
            standard: ms,
            implicit: mi,
            se_standard: (vs / n).sqrt(),
            se_implicit: (vi / n).sqrt(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// noise-parameter identification (table6)

#[derive(Debug, Clone)]
pub struct IdentTableConfig {
    pub seed: u64,
    pub particles: usize,
    pub n_steps: usize,
    pub max_iterations: usize,
    pub sigma_star: f64,
    pub s: f64,
    pub delta: f64,
    pub sigma_init_factor: f64,
}

impl Default for IdentTableConfig {
    fn default() -> Self {
        IdentTableConfig {
            seed: 7,
            particles: 50,
            n_steps: 100,
            max_iterations: 13,
            sigma_star: 1e-2,
            s: 1e-4,
            delta: 0.01,
            sigma_init_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdentTableRow {
    pub iteration: usize,
    pub sigma_over_star: f64,
    pub t_value: Option<f64>,
}

fn ident_data(cfg: &IdentTableConfig) -> Vec<Vec<f64>> {
    let truth = SdeModel::scalar(|_| 0.0, cfg.sigma_star, cfg.delta, true);
    let obs = linear_obs(cfg.s);
    generate_synthetic(
        &truth,
        &obs,
        &[0.0],
        cfg.n_steps,
        mix_seed(cfg.seed, 0xDA7A),
    )
    .1
}

fn ident_run(cfg: &IdentTableConfig, data: &[Vec<f64>], run_seed: u64) -> Result<RmTrace> {
    let rm = RmConfig {
        sigma_init: cfg.sigma_init_factor * cfg.sigma_star,
        max_iterations: cfg.max_iterations,
        n_particles: cfg.particles,
        n_steps: cfg.n_steps,
        ..RmConfig::default()
    };
    let delta = cfg.delta;
    let trace = identify(
        move |sigma| SdeModel::scalar(move |_| 0.0, sigma, delta, true),
        &linear_obs(cfg.s),
        &[0.0],
        data,
        &rm,
        run_seed,
    )?;
    Ok(trace)
}

/// Convergence trace of one identification run on the seeded data set.
pub fn ident_table(cfg: &IdentTableConfig) -> Result<Vec<IdentTableRow>> {
    let data = ident_data(cfg);
    let trace = ident_run(cfg, &data, mix_seed(cfg.seed, 0x1D))?;
    let mut rows = Vec::with_capacity(trace.sigmas.len());
    for (i, sigma) in trace.sigmas.iter().enumerate() {
        rows.push(IdentTableRow {
            iteration: i,
            sigma_over_star: sigma / cfg.sigma_star,
            t_value: if i == 0 {
                None
            } else {
                Some(trace.t_values[i - 1])
            },
        });
    }
    Ok(rows)
}

/// Final `sigma/sigma*` of repeated identification runs (fresh filter
/// streams) on the one seeded data set.
pub fn ident_trials(cfg: &IdentTableConfig, n_trials: usize) -> Result<Vec<f64>> {
    let data = ident_data(cfg);
    let mut finals = Vec::with_capacity(n_trials);
    for t in 0..n_trials {
        let trace = ident_run(cfg, &data, mix_seed(cfg.seed, 100 + t as u64))?;
        finals.push(trace.final_sigma() / cfg.sigma_star);
    }
    Ok(finals)
}

// ---------------------------------------------------------------------------
// figure data

pub struct FigureData {
    /// (x, V(x)) for the double-well potential.
    pub potential: Vec<(f64, f64)>,
    /// (x, F(x), F0(x)) for the non-convex static objective at b = 1.
    pub substitute: Vec<(f64, f64, f64)>,
    /// (t, truth, estimate) for one seeded tracking run.
    pub tracking: Vec<(f64, f64, f64)>,
    /// Per-step run diagnostics of the same tracking run:
    /// (step, truth, estimate, variance, ess).
    pub run_diagnostics: Vec<(usize, f64, f64, f64, f64)>,
}

pub fn figure_data(seed: u64) -> Result<FigureData> {
    let potential: Vec<(f64, f64)> = (0..=480)
        .map(|i| {
            let x = -1.2 + 2.4 * i as f64 / 480.0;
            let d = x * x - 0.5;
            (x, 2.5 * d * d)
        })
        .collect();

    let obj = static_problem(0.1, 0.1, 1.0, true);
    let comp = obj.components[0].clone();
    let (z, fz) = ipf_core::sampler::find_minimum_scalar(&comp)?;
    let sub = ipf_core::sampler::UShapedSubstitute::build(&comp, z, fz)?;
    let substitute: Vec<(f64, f64, f64)> = (0..=800)
        .map(|i| {
            let x = -2.0 + 4.0 * i as f64 / 800.0;
            (x, comp.eval(x), sub.eval(x))
        })
        .collect();

    let model = double_well_model(0.1, 0.01);
    let obs = linear_obs(0.025);
    let (traj, observations) = generate_synthetic(&model, &obs, &[0.0], 100, mix_seed(seed, 2));
    let fc = FilterConfig::new(50, Proposal::ImplicitAutoFallback, mix_seed(seed, 3));
    let out = run_filter(&model, &obs, &observations, &[0.0], &fc)?;
    let tracking: Vec<(f64, f64, f64)> = (0..out.times.len())
        .map(|i| (out.times[i], traj.states[i][0], out.means[i][0]))
        .collect();
    let run_diagnostics: Vec<(usize, f64, f64, f64, f64)> = (0..out.times.len())
        .map(|i| {
            (
                i,
                traj.states[i][0],
                out.means[i][0],
                out.variances[i][0],
                out.ess[i],
            )
        })
        .collect();

    Ok(FigureData {
        potential,
        substitute,
        tracking,
        run_diagnostics,
    })
}
