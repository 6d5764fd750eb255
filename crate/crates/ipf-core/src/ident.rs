//! Noise-parameter identification by stochastic approximation.
//!
//! The unknown diffusion parameter is found as the root of the expected value
//! of a whiteness statistic `T`: when the filter runs with the true parameter
//! the estimated state increments are uncorrelated and `E[T] = 0`. Each
//! iteration runs the filter once over the fixed data set (without resampling,
//! which would correlate successive increments), evaluates `T` on the
//! increments of the weighted mean path, and updates the parameter with a
//! diminishing step.

use crate::error::{Error, IdentError};
use crate::filter::{run_filter, FilterConfig, Proposal};
use crate::model::{ObservationModel, SdeModel};
use crate::rng::mix_seed;
use crate::sampler::SolveOptions;

/// Which estimated trajectory supplies the increments the statistic sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrementSource {
    /// Weighted mean of the retained trajectories under the final weights.
    /// Its whiteness root sits near the true parameter, which is what makes
    /// the iteration land well; the default.
    SmoothedPath,
    /// Running filtered means (weights as of each step). Finite-ensemble
    /// noise in the path differences biases its root low.
    FilteredPath,
}

/// Stochastic-approximation configuration.
#[derive(Debug, Clone)]
pub struct RmConfig {
    /// Starting guess for the diffusion parameter.
    pub sigma_init: f64,
    /// Scale constant multiplying the normalized autocorrelation. The sign
    /// makes the iteration contract toward the whiteness root: the statistic
    /// must be positive where the parameter is too large.
    pub scale_c: f64,
    /// First step size; step `n` uses `alpha_1 / n`.
    pub alpha1: f64,
    pub max_iterations: usize,
    /// Segment length for segmented runs; 0 disables segmentation.
    pub segment_len: usize,
    pub n_particles: usize,
    /// Filter steps per run.
    pub n_steps: usize,
    pub increments: IncrementSource,
    pub solve: SolveOptions,
}

impl Default for RmConfig {
    fn default() -> Self {
        RmConfig {
            sigma_init: 0.1,
            scale_c: -4.0,
            alpha1: 1.0,
            max_iterations: 15,
            segment_len: 0,
            n_particles: 50,
            n_steps: 100,
            increments: IncrementSource::SmoothedPath,
            solve: SolveOptions::default(),
        }
    }
}

/// Iterates of one identification run.
#[derive(Debug, Clone)]
pub struct RmTrace {
    /// sigma_1 .. sigma_final (the first entry is the starting guess).
    pub sigmas: Vec<f64>,
    /// Statistic value evaluated at each iterate (one fewer than sigmas).
    pub t_values: Vec<f64>,
}

impl RmTrace {
    pub fn final_sigma(&self) -> f64 {
        *self.sigmas.last().unwrap()
    }
}

/// Scaled lag-1 autocorrelation of an increment series:
/// `C sum(d_i d_{i-1}) / sqrt(sum d_i^2 sum d_{i-1}^2)`, sums over i = 2..N.
pub fn statistic_t(increments: &[f64], c: f64) -> Result<f64, IdentError> {
    let n = increments.len();
    if n < 3 {
        return Err(IdentError::TooFewIncrements(n));
    }
    let mut num = 0.0;
    let mut d_cur = 0.0;
    let mut d_prev = 0.0;
    for i in 1..n {
        num += increments[i] * increments[i - 1];
        d_cur += increments[i] * increments[i];
        d_prev += increments[i - 1] * increments[i - 1];
    }
    let denom = (d_cur * d_prev).sqrt();
    if denom == 0.0 {
        return Err(IdentError::DegenerateIncrements);
    }
    Ok(c * num / denom)
}

/// Pooled numerator/denominator pieces of the statistic, for segmented runs.
#[derive(Debug, Clone, Copy, Default)]
struct TPieces {
    num: f64,
    d_cur: f64,
    d_prev: f64,
}

impl TPieces {
    fn add_series(&mut self, increments: &[f64]) {
        for i in 1..increments.len() {
            self.num += increments[i] * increments[i - 1];
            self.d_cur += increments[i] * increments[i];
            self.d_prev += increments[i - 1] * increments[i - 1];
        }
    }

    fn value(&self, c: f64) -> Result<f64, IdentError> {
        let denom = (self.d_cur * self.d_prev).sqrt();
        if denom == 0.0 {
            return Err(IdentError::DegenerateIncrements);
        }
        Ok(c * self.num / denom)
    }
}

/// Increments of the estimated trajectory of a completed run (component 0;
/// the identification models are scalar).
fn path_increments(out: &crate::filter::FilterOutput, source: IncrementSource) -> Vec<f64> {
    match source {
        IncrementSource::SmoothedPath => {
            let path = out.final_ensemble.smoothed_mean_path();
            path.windows(2).map(|w| w[1][0] - w[0][0]).collect()
        }
        IncrementSource::FilteredPath => out.means.windows(2).map(|w| w[1][0] - w[0][0]).collect(),
    }
}

fn filter_cfg(cfg: &RmConfig, seed: u64, resample: bool, steps: usize) -> FilterConfig {
    FilterConfig {
        resample_every: if resample { 1 } else { 0 },
        history_cap: steps + 1,
        solve: cfg.solve,
        ..FilterConfig::new(cfg.n_particles, Proposal::ImplicitAutoFallback, seed)
    }
}

/// One Robbins-Monro update: multiplicative (log-domain) step with the
/// diminishing schedule, floored away from zero.
fn update_sigma(sigma: f64, alpha_n: f64, t: f64) -> f64 {
    (sigma * (-alpha_n * t).exp()).max(1e-3 * sigma)
}

/// Identify the diffusion parameter from one fixed observation record.
///
/// `make_model` builds the filter model for a trial parameter value. The
/// filter starts at `x0` and consumes all of `data`; it runs without
/// resampling so successive increment estimates stay uncorrelated under the
/// true parameter.
pub fn identify(
    make_model: impl Fn(f64) -> SdeModel,
    obs: &ObservationModel,
    x0: &[f64],
    data: &[Vec<f64>],
    cfg: &RmConfig,
    seed: u64,
) -> Result<RmTrace, Error> {
    identify_impl(make_model, obs, x0, data, cfg, seed, cfg.segment_len)
}

/// Segmented identification: the statistic is pooled over segments run
/// without resampling, and each segment is then re-run with resampling to
/// produce the next segment's starting ensemble. Keeps long runs on track
/// while leaving the statistic unbiased by resampling noise.
pub fn segmented_identify(
    make_model: impl Fn(f64) -> SdeModel,
    obs: &ObservationModel,
    x0: &[f64],
    data: &[Vec<f64>],
    cfg: &RmConfig,
    seed: u64,
) -> Result<RmTrace, Error> {
    assert!(cfg.segment_len >= 3, "segments need at least 3 steps");
    identify_impl(make_model, obs, x0, data, cfg, seed, cfg.segment_len)
}

fn identify_impl(
    make_model: impl Fn(f64) -> SdeModel,
    obs: &ObservationModel,
    x0: &[f64],
    data: &[Vec<f64>],
    cfg: &RmConfig,
    seed: u64,
    segment_len: usize,
) -> Result<RmTrace, Error> {
    assert!(cfg.sigma_init > 0.0);
    let n_steps = cfg.n_steps.min(data.len());
    let lo = 1e-6 * cfg.sigma_init;
    let hi = 1e3 * cfg.sigma_init;
    let mut sigma = cfg.sigma_init;
    let mut sigmas = vec![sigma];
    let mut t_values = Vec::new();
    let mut small_changes = 0;
    for n in 1..=cfg.max_iterations {
        let model = make_model(sigma);
        let iter_seed = mix_seed(seed, n as u64);
        let t = if segment_len == 0 || segment_len >= n_steps {
            let fc = filter_cfg(cfg, mix_seed(iter_seed, 0), false, n_steps);
            let out = run_filter(&model, obs, &data[..n_steps], x0, &fc)
                .map_err(|e| IdentError::Filter(Box::new(e)))?;
            let incr = path_increments(&out, cfg.increments);
            statistic_t(&incr, cfg.scale_c)?
        } else {
            segmented_t(
                &model,
                obs,
                x0,
                &data[..n_steps],
                cfg,
                iter_seed,
                segment_len,
            )?
        };
        t_values.push(t);
        let alpha_n = cfg.alpha1 / n as f64;
        let next = update_sigma(sigma, alpha_n, t);
        if next < lo || next > hi {
            return Err(IdentError::Divergence {
                sigma: next,
                lo,
                hi,
            }
            .into());
        }
        let rel_change = (next - sigma).abs() / sigma;
        sigma = next;
        sigmas.push(sigma);
        small_changes = if rel_change < 1e-3 {
            small_changes + 1
        } else {
            0
        };
        if small_changes >= 3 {
            break;
        }
    }
    Ok(RmTrace { sigmas, t_values })
}

fn segmented_t(
    model: &SdeModel,
    obs: &ObservationModel,
    x0: &[f64],
    data: &[Vec<f64>],
    cfg: &RmConfig,
    iter_seed: u64,
    segment_len: usize,
) -> Result<f64, Error> {
    let mut pieces = TPieces::default();
    let mut start_positions: Option<Vec<Vec<f64>>> = None;
    let mut seg_index = 0u64;
    let mut consumed = 0;
    while consumed < data.len() {
        let seg_end = (consumed + segment_len).min(data.len());
        let seg = &data[consumed..seg_end];
        let steps = seg.len();
        // statistic pass: no resampling
        let fc = filter_cfg(cfg, mix_seed(iter_seed, 2 * seg_index), false, steps);
        let out = run_from(model, obs, seg, x0, &start_positions, &fc)?;
        pieces.add_series(&path_increments(&out, cfg.increments));
        // continuation pass: same segment with resampling
        if seg_end < data.len() {
            let fc = filter_cfg(cfg, mix_seed(iter_seed, 2 * seg_index + 1), true, steps);
            let out = run_from(model, obs, seg, x0, &start_positions, &fc)?;
            let ens = out.final_ensemble;
            let positions = (0..ens.n_particles())
                .map(|i| ens.particle(i).to_vec())
                .collect::<Vec<_>>();
            start_positions = Some(positions);
        }
        consumed = seg_end;
        seg_index += 1;
    }
    Ok(pieces.value(cfg.scale_c)?)
}

fn run_from(
    model: &SdeModel,
    obs: &ObservationModel,
    data: &[Vec<f64>],
    x0: &[f64],
    start_positions: &Option<Vec<Vec<f64>>>,
    fc: &FilterConfig,
) -> Result<crate::filter::FilterOutput, Error> {
    match start_positions {
        None => run_filter(model, obs, data, x0, fc),
        Some(positions) => {
            use crate::filter::{sparse_gap_step, standard_sir_step, Ensemble};
            let mut ens = Ensemble::from_positions(positions, fc.history_cap);
            let mut out = crate::filter::FilterOutput {
                times: vec![0.0],
                means: vec![ens.weighted_mean()],
                variances: vec![ens.weighted_variance()],
                ess: vec![ens.ess()],
                entropy: vec![ens.weight_entropy()],
                weight_collapse_steps: Vec::new(),
                final_ensemble: Ensemble::new_at(x0, 1, 0),
            };
            for b in data {
                let record = match fc.proposal {
                    Proposal::StandardSir => standard_sir_step(&mut ens, b, model, obs, fc)?,
                    _ => sparse_gap_step(&mut ens, b, obs.obs_stride(), model, obs, fc)?,
                };
                out.times.push(ens.step() as f64 * model.delta());
                out.means.push(record.mean);
                out.variances.push(record.variance);
                out.ess.push(record.ess);
                out.entropy.push(record.entropy);
            }
            out.final_ensemble = ens;
            Ok(out)
        }
    }
}
