//! Sequential filter: implicit proposal steps, the prior-proposal baseline,
//! multinomial resampling, backward re-draws and joint solves over
//! observation gaps.
//!
//! Per step and particle, a reference vector is drawn from its own counter
//! stream, the per-particle objective is built and solved, and the particle's
//! log weight is incremented by `-(phi + log_norm) + log J`. Serial and
//! parallel execution of the same configuration produce identical output
//! because no randomness is shared across particles.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, SolverError};
use crate::model::{
    euler_step, observation_logdensity, standard_normal_vec, transition_logdensity,
    ObservationModel, SdeModel,
};
use crate::rng::{stream, StreamKind};
use crate::sampler::{
    backward_objective, build_objective, minimize_smooth, quadratic_form_at_minimum,
    solve_algorithm_a, solve_algorithm_b, solve_random_direction, JointObjective, PreparedSampler,
    SolveOptions,
};

/// Proposal used to move particles through an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposal {
    /// Iterated linearization only; errors when it cannot converge.
    ImplicitA,
    /// Branch-constrained Newton only; errors on non-U-shaped objectives.
    ImplicitB,
    /// Linearization where exact, branch solve otherwise, substitute where
    /// the objective is not U-shaped.
    ImplicitAutoFallback,
    /// Propagate from the dynamics alone and weight by the observation
    /// likelihood.
    StandardSir,
}

/// Filter configuration.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub proposal: Proposal,
    /// Resample every this many steps; 0 disables resampling.
    pub resample_every: usize,
    /// Deepest lag at which past positions may be re-drawn; bounds the
    /// retained history.
    pub backward_lag: usize,
    /// How many past position snapshots to retain (at least backward_lag+2
    /// to allow re-draws at the configured lag).
    pub history_cap: usize,
    pub seed: u64,
    pub solve: SolveOptions,
    /// When set, append one CSV line per solved particle
    /// (step, particle, xi, position, phi, log_jacobian) to this file.
    pub solver_dump: Option<std::path::PathBuf>,
}

impl FilterConfig {
    pub fn new(n_particles: usize, proposal: Proposal, seed: u64) -> Self {
        assert!(n_particles >= 1);
        let backward_lag = 2;
        FilterConfig {
            n_particles,
            proposal,
            resample_every: 1,
            backward_lag,
            history_cap: backward_lag + 2,
            seed,
            solve: SolveOptions::default(),
            solver_dump: None,
        }
    }
}

/// Dump row: (particle, reference draw, position, phi, log Jacobian).
type SolveDumpRow = (usize, Vec<f64>, Vec<f64>, f64, f64);

fn dump_solutions(path: &std::path::Path, step: usize, rows: &[SolveDumpRow]) {
    use std::io::Write;
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.12e}"))
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut text = String::new();
    for (particle, xi, x, phi, log_j) in rows {
        text.push_str(&format!(
            "{step},{particle},{},{},{phi:.12e},{log_j:.12e}\n",
            join(xi),
            join(x)
        ));
    }
    if let Ok(mut f) = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
    {
        let _ = f.write_all(text.as_bytes());
    }
}

/// Weighted particle ensemble with an optional trajectory history.
#[derive(Debug, Clone)]
pub struct Ensemble {
    dim: usize,
    positions: Vec<f64>,   // n x dim, row-major
    log_weights: Vec<f64>, // unnormalized
    step: usize,
    history: VecDeque<Vec<f64>>,
    history_cap: usize,
}

impl Ensemble {
    /// All particles at the same starting point with equal weights.
    pub fn new_at(x0: &[f64], n_particles: usize, history_cap: usize) -> Self {
        let dim = x0.len();
        let mut positions = Vec::with_capacity(n_particles * dim);
        for _ in 0..n_particles {
            positions.extend_from_slice(x0);
        }
        let mut ens = Ensemble {
            dim,
            positions,
            log_weights: vec![0.0; n_particles],
            step: 0,
            history: VecDeque::new(),
            history_cap,
        };
        ens.push_history();
        ens
    }

    /// Equal-weight ensemble with explicit particle positions.
    pub fn from_positions(positions: &[Vec<f64>], history_cap: usize) -> Self {
        assert!(!positions.is_empty());
        let dim = positions[0].len();
        let mut flat = Vec::with_capacity(positions.len() * dim);
        for p in positions {
            assert_eq!(p.len(), dim);
            flat.extend_from_slice(p);
        }
        let mut ens = Ensemble {
            dim,
            positions: flat,
            log_weights: vec![0.0; positions.len()],
            step: 0,
            history: VecDeque::new(),
            history_cap,
        };
        ens.push_history();
        ens
    }

    pub fn n_particles(&self) -> usize {
        self.log_weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Add an increment to one particle's log weight.
    pub fn scale_log_weight(&mut self, i: usize, log_factor: f64) {
        self.log_weights[i] += log_factor;
    }

    /// Weights normalized to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let max = self
            .log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = self.log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let total: f64 = w.iter().sum();
        for v in w.iter_mut() {
            *v /= total;
        }
        w
    }

    pub fn weighted_mean(&self) -> Vec<f64> {
        let w = self.normalized_weights();
        let mut mean = vec![0.0; self.dim];
        for (i, wi) in w.iter().enumerate() {
            for (d, m) in mean.iter_mut().enumerate() {
                *m += wi * self.positions[i * self.dim + d];
            }
        }
        mean
    }

    pub fn weighted_variance(&self) -> Vec<f64> {
        let w = self.normalized_weights();
        let mean = self.weighted_mean();
        let mut var = vec![0.0; self.dim];
        for (i, wi) in w.iter().enumerate() {
            for (d, v) in var.iter_mut().enumerate() {
                let r = self.positions[i * self.dim + d] - mean[d];
                *v += wi * r * r;
            }
        }
        var
    }

    /// Effective sample size `1 / sum W_i^2`.
    pub fn ess(&self) -> f64 {
        let w = self.normalized_weights();
        1.0 / w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Weight entropy `-sum W_i ln W_i`.
    pub fn weight_entropy(&self) -> f64 {
        self.normalized_weights()
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| -w * w.ln())
            .sum()
    }

    fn push_history(&mut self) {
        if self.history_cap == 0 {
            return;
        }
        self.history.push_back(self.positions.clone());
        while self.history.len() > self.history_cap {
            self.history.pop_front();
        }
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Position of particle `i` as of `lag` steps before the current one
    /// (lag 0 = current).
    pub fn past_position(&self, i: usize, lag: usize) -> Option<&[f64]> {
        let idx = self.history.len().checked_sub(1 + lag)?;
        let snap = &self.history[idx];
        Some(&snap[i * self.dim..(i + 1) * self.dim])
    }

    /// Mean trajectory under the current weights: entry `n` is the weighted
    /// mean of the retained positions at step `n`.
    pub fn smoothed_mean_path(&self) -> Vec<Vec<f64>> {
        let w = self.normalized_weights();
        self.history
            .iter()
            .map(|snap| {
                let mut mean = vec![0.0; self.dim];
                for (i, wi) in w.iter().enumerate() {
                    for (d, m) in mean.iter_mut().enumerate() {
                        *m += wi * snap[i * self.dim + d];
                    }
                }
                mean
            })
            .collect()
    }
}

/// Per-step diagnostics recorded before any resampling.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ess: f64,
    pub entropy: f64,
    pub resampled: bool,
    pub weight_collapse: bool,
}

/// Filter run summary.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub times: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
    pub entropy: Vec<f64>,
    pub weight_collapse_steps: Vec<usize>,
    pub final_ensemble: Ensemble,
}

/// Move every particle through one observation with an implicit proposal and
/// update the weights; resample afterwards when the schedule says so.
pub fn filter_step(
    ens: &mut Ensemble,
    b_next: &[f64],
    model: &SdeModel,
    obs: &ObservationModel,
    cfg: &FilterConfig,
) -> Result<StepRecord, Error> {
    let t = ens.step as f64 * model.delta();
    let n = ens.n_particles();
    let m = ens.dim();
    let mut dump_rows = Vec::new();
    for i in 0..n {
        let mut rng = stream(cfg.seed, StreamKind::Proposal, i as u64, ens.step as u64);
        let xi = standard_normal_vec(&mut rng, m);
        let x_prev = ens.particle(i).to_vec();
        let obj = build_objective(model, obs, &x_prev, b_next, t).map_err(SolverError::from)?;
        let sol = match cfg.proposal {
            Proposal::ImplicitA => solve_algorithm_a(&obj, &xi, cfg.solve)?,
            Proposal::ImplicitB => solve_algorithm_b(&obj, &xi, cfg.solve)?,
            Proposal::ImplicitAutoFallback => {
                PreparedSampler::prepare(&obj, cfg.solve)?.draw(&xi, cfg.solve)?
            }
            Proposal::StandardSir => {
                unreachable!("prior-proposal steps go through standard_sir_step")
            }
        };
        if cfg.solver_dump.is_some() {
            dump_rows.push((
                i,
                xi.clone(),
                sol.position.clone(),
                sol.phi,
                sol.log_jacobian,
            ));
        }
        ens.positions[i * m..(i + 1) * m].copy_from_slice(&sol.position);
        ens.log_weights[i] += -(sol.phi + obj.log_norm) + sol.log_jacobian;
    }
    if let Some(path) = &cfg.solver_dump {
        dump_solutions(path, ens.step, &dump_rows);
    }
    ens.step += 1;
    ens.push_history();
    Ok(finish_step(ens, cfg, false))
}

/// Prior-proposal baseline: propagate with fresh dynamics noise, weight by
/// the observation likelihood. Covers observation strides greater than one by
/// propagating through the whole gap.
pub fn standard_sir_step(
    ens: &mut Ensemble,
    b_next: &[f64],
    model: &SdeModel,
    obs: &ObservationModel,
    cfg: &FilterConfig,
) -> Result<StepRecord, Error> {
    let n = ens.n_particles();
    let m = ens.dim();
    let stride = obs.obs_stride();
    for _ in 0..stride {
        let t = ens.step as f64 * model.delta();
        for i in 0..n {
            let mut rng = stream(cfg.seed, StreamKind::Sir, i as u64, ens.step as u64);
            let noise = standard_normal_vec(&mut rng, m);
            let x = euler_step(model, ens.particle(i), t, &noise);
            ens.positions[i * m..(i + 1) * m].copy_from_slice(&x);
        }
        ens.step += 1;
        ens.push_history();
    }
    for i in 0..n {
        let lp = observation_logdensity(obs, ens.particle(i), b_next).map_err(SolverError::from)?;
        ens.log_weights[i] += lp;
    }
    let w = ens.normalized_weights();
    let collapse = w.iter().cloned().fold(0.0f64, f64::max) > 1.0 - 1e-9;
    Ok(finish_step(ens, cfg, collapse))
}

fn finish_step(ens: &mut Ensemble, cfg: &FilterConfig, weight_collapse: bool) -> StepRecord {
    let record = StepRecord {
        mean: ens.weighted_mean(),
        variance: ens.weighted_variance(),
        ess: ens.ess(),
        entropy: ens.weight_entropy(),
        resampled: false,
        weight_collapse,
    };
    let due = cfg.resample_every > 0 && ens.step.is_multiple_of(cfg.resample_every);
    if due {
        let mut rng = stream(cfg.seed, StreamKind::Resample, 0, ens.step as u64);
        resample(ens, &mut rng);
        StepRecord {
            resampled: true,
            ..record
        }
    } else {
        record
    }
}

/// Multinomial resampling: draw one uniform per offspring and select the
/// particle whose cumulative normalized weight interval contains it. All
/// output weights are equal. The trajectory history is remapped so rows keep
/// following their ancestors.
pub fn resample(ens: &mut Ensemble, rng: &mut ChaCha8Rng) {
    let n = ens.n_particles();
    let m = ens.dim();
    let w = ens.normalized_weights();
    let mut cum = w.clone();
    for i in 1..n {
        cum[i] += cum[i - 1];
    }
    cum[n - 1] = 1.0;
    let mut choices = Vec::with_capacity(n);
    for _ in 0..n {
        let theta: f64 = rng.gen();
        let idx = cum.partition_point(|&c| c < theta).min(n - 1);
        choices.push(idx);
    }
    let old = ens.positions.clone();
    for (k, &src) in choices.iter().enumerate() {
        ens.positions[k * m..(k + 1) * m].copy_from_slice(&old[src * m..(src + 1) * m]);
    }
    for snap in ens.history.iter_mut() {
        let old_snap = snap.clone();
        for (k, &src) in choices.iter().enumerate() {
            snap[k * m..(k + 1) * m].copy_from_slice(&old_snap[src * m..(src + 1) * m]);
        }
    }
    ens.log_weights.fill(0.0);
}

/// Advance the ensemble through `gap` unobserved steps plus the observation
/// at the end, sampling all intermediate positions jointly. For `gap == 1`
/// this is exactly `filter_step`.
pub fn sparse_gap_step(
    ens: &mut Ensemble,
    b_next: &[f64],
    gap: usize,
    model: &SdeModel,
    obs: &ObservationModel,
    cfg: &FilterConfig,
) -> Result<StepRecord, Error> {
    assert!(gap >= 1);
    if gap == 1 {
        return filter_step(ens, b_next, model, obs, cfg);
    }
    let n = ens.n_particles();
    let m = ens.dim();
    let t0 = ens.step as f64 * model.delta();
    let joint_dim = gap * m;
    let mut stacked: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(cfg.seed, StreamKind::Proposal, i as u64, ens.step as u64);
        let xi = standard_normal_vec(&mut rng, joint_dim);
        let x_prev = ens.particle(i).to_vec();
        let joint = joint_gap_objective(model, obs, &x_prev, b_next, t0, gap);
        // deterministic propagation as the minimization start
        let mut start = Vec::with_capacity(joint_dim);
        let mut cur = x_prev.clone();
        for j in 0..gap {
            cur = model.euler_mean(&cur, t0 + j as f64 * model.delta());
            start.extend_from_slice(&cur);
        }
        let (argmin, _fmin) = minimize_smooth(&|x| joint.eval(x), &start, 1e-8, 200)?;
        let q = quadratic_form_at_minimum(&|x| joint.eval(x), &argmin)?;
        let sol = solve_random_direction(&q, &xi);
        // fold the gap between the joint objective and its quadratic model
        // into the additive factor; the weight stays exact
        let phi_total = sol.phi + (joint.eval(&sol.position) - q.eval(&sol.position));
        ens.log_weights[i] += -phi_total + sol.log_jacobian;
        stacked.push(sol.position);
    }
    for j in 0..gap {
        for (i, path) in stacked.iter().enumerate() {
            ens.positions[i * m..(i + 1) * m].copy_from_slice(&path[j * m..(j + 1) * m]);
        }
        ens.step += 1;
        ens.push_history();
    }
    Ok(finish_step(ens, cfg, false))
}

/// Negative log of `P(X^1..X^gap | x_prev) P(b | X^gap)` over the stacked
/// vector, all normalization constants included. Infinite outside the
/// domain where variances are positive.
fn joint_gap_objective(
    model: &SdeModel,
    obs: &ObservationModel,
    x_prev: &[f64],
    b_next: &[f64],
    t0: f64,
    gap: usize,
) -> JointObjective {
    let m = model.dim();
    let model = model.clone();
    let obs = obs.clone();
    let x_prev = x_prev.to_vec();
    let b_next = b_next.to_vec();
    JointObjective::new(
        gap * m,
        Arc::new(move |x: &[f64]| {
            let mut total = 0.0;
            let mut prev: &[f64] = &x_prev;
            for j in 0..gap {
                let cur = &x[j * m..(j + 1) * m];
                match transition_logdensity(&model, prev, cur, t0 + j as f64 * model.delta()) {
                    Ok(lp) => total -= lp,
                    Err(_) => return f64::INFINITY,
                }
                prev = cur;
            }
            match observation_logdensity(&obs, prev, &b_next) {
                Ok(lp) => total -= lp,
                Err(_) => return f64::INFINITY,
            }
            total
        }),
    )
}

/// Re-draw the position of one particle at `lag` steps back, conditioned on
/// its neighbours and an optional observation at that time. The particle's
/// history entry is replaced and its log weight adjusted; the log of the
/// weight adjustment is returned.
pub fn backward_resample(
    ens: &mut Ensemble,
    particle: usize,
    model: &SdeModel,
    obs_at_mid: Option<(&ObservationModel, &[f64])>,
    lag: usize,
    cfg: &FilterConfig,
) -> Result<f64, Error> {
    assert!(lag >= 1, "lag 0 is the current position");
    let hist_len = ens.history.len();
    if hist_len < lag + 2 {
        return Err(Error::Config(format!(
            "backward re-draw at lag {lag} needs {} retained snapshots, have {hist_len}",
            lag + 2
        )));
    }
    let x_prev = ens.past_position(particle, lag + 1).unwrap().to_vec();
    let x_next = ens.past_position(particle, lag - 1).unwrap().to_vec();
    let x_mid_old = ens.past_position(particle, lag).unwrap().to_vec();
    let t_mid = (ens.step - lag) as f64 * model.delta();
    let obj = backward_objective(model, obs_at_mid, &x_prev, &x_next, &x_mid_old, t_mid)
        .map_err(SolverError::from)?;
    let mut rng = stream(
        cfg.seed,
        StreamKind::Backward,
        particle as u64,
        (ens.step - lag) as u64,
    );
    let xi = standard_normal_vec(&mut rng, ens.dim());
    let prep = PreparedSampler::prepare(&obj, cfg.solve)?;
    let sol = prep.draw(&xi, cfg.solve)?;
    let idx = hist_len - 1 - lag;
    let m = ens.dim();
    ens.history[idx][particle * m..(particle + 1) * m].copy_from_slice(&sol.position);
    let log_adjust = -(sol.phi + obj.log_norm) + sol.log_jacobian;
    ens.log_weights[particle] += log_adjust;
    Ok(log_adjust)
}

/// Re-draw every particle's past positions over the configured lag window,
/// deepest lag first, so that fresh observations propagate information into
/// the retained past. `recent_obs[k]` is the observation made at lag `k+1`
/// (None where the middle time was unobserved).
pub fn backward_pass(
    ens: &mut Ensemble,
    model: &SdeModel,
    obs: &ObservationModel,
    recent_obs: &[Option<Vec<f64>>],
    cfg: &FilterConfig,
) -> Result<(), Error> {
    for lag in (1..=cfg.backward_lag).rev() {
        if ens.history_len() < lag + 2 {
            continue;
        }
        let b_mid = recent_obs.get(lag - 1).and_then(|o| o.as_ref());
        for i in 0..ens.n_particles() {
            backward_resample(ens, i, model, b_mid.map(|b| (obs, b.as_slice())), lag, cfg)?;
        }
    }
    Ok(())
}

/// Run the filter over a sequence of observations spaced `obs_stride` steps
/// apart, starting all particles at `x0`.
pub fn run_filter(
    model: &SdeModel,
    obs: &ObservationModel,
    observations: &[Vec<f64>],
    x0: &[f64],
    cfg: &FilterConfig,
) -> Result<FilterOutput, Error> {
    let stride = obs.obs_stride();
    let mut ens = Ensemble::new_at(x0, cfg.n_particles, cfg.history_cap);
    let mut out = FilterOutput {
        times: vec![0.0],
        means: vec![x0.to_vec()],
        variances: vec![vec![0.0; x0.len()]],
        ess: vec![cfg.n_particles as f64],
        entropy: vec![(cfg.n_particles as f64).ln()],
        weight_collapse_steps: Vec::new(),
        final_ensemble: Ensemble::new_at(x0, 1, 0),
    };
    for b in observations {
        let record = match cfg.proposal {
            Proposal::StandardSir => standard_sir_step(&mut ens, b, model, obs, cfg)?,
            _ => sparse_gap_step(&mut ens, b, stride, model, obs, cfg)?,
        };
        out.times.push(ens.step as f64 * model.delta());
        out.means.push(record.mean);
        out.variances.push(record.variance);
        out.ess.push(record.ess);
        out.entropy.push(record.entropy);
        if record.weight_collapse {
            out.weight_collapse_steps.push(ens.step);
        }
    }
    out.final_ensemble = ens;
    Ok(out)
}
