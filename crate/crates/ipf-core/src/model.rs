//! Continuous model, Euler discretization, observation process and synthetic
//! data generation.
//!
//! The state obeys an Ito SDE with drift `f`, diagonal diffusion `g` and time
//! step `delta`; observations are a componentwise function of the state plus
//! independent Gaussian noise. One Euler step from `x` is Gaussian with mean
//! `x + f(x,t) delta` and a per-component variance given by
//! [`SdeModel::step_variances`].

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::ModelError;
use crate::rng::{stream, StreamKind};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Shared state-vector callable: (state, time) -> per-component values.
pub type StateFn = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
/// Shared componentwise callable: (component index, scalar) -> scalar.
pub type ComponentFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Ito SDE `dx = f(x,t) dt + g(x,t) dw` with diagonal diffusion, plus its
/// Euler discretization with step `delta`.
#[derive(Clone)]
pub struct SdeModel {
    dim: usize,
    delta: f64,
    drift: StateFn,
    diffusion: StateFn,
    /// When set, `g` is interpreted as the variance growth rate per unit time
    /// (one step has variance `g * delta`); otherwise `g` is the noise
    /// amplitude and one step has variance `g^2 * delta`.
    diffusion_is_variance_rate: bool,
}

impl SdeModel {
    pub fn new(
        dim: usize,
        delta: f64,
        drift: StateFn,
        diffusion: StateFn,
        diffusion_is_variance_rate: bool,
    ) -> Self {
        assert!(dim >= 1, "state dimension must be at least 1");
        assert!(delta > 0.0, "time step must be positive");
        SdeModel {
            dim,
            delta,
            drift,
            diffusion,
            diffusion_is_variance_rate,
        }
    }

    /// Scalar model with constant diffusion coefficient `sigma`.
    pub fn scalar(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: f64,
        delta: f64,
        diffusion_is_variance_rate: bool,
    ) -> Self {
        Self::new(
            1,
            delta,
            Arc::new(move |x: &[f64], _t| vec![drift(x[0])]),
            Arc::new(move |_x: &[f64], _t| vec![sigma]),
            diffusion_is_variance_rate,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        (self.drift)(x, t)
    }

    /// Deterministic Euler map: `x + f(x,t) delta`.
    pub fn euler_mean(&self, x: &[f64], t: f64) -> Vec<f64> {
        let f = self.drift(x, t);
        x.iter()
            .zip(&f)
            .map(|(xi, fi)| xi + fi * self.delta)
            .collect()
    }

    /// Per-component variance of one Euler step started at `x`.
    pub fn step_variances(&self, x: &[f64], t: f64) -> Vec<f64> {
        let g = (self.diffusion)(x, t);
        g.iter()
            .map(|&gi| {
                if self.diffusion_is_variance_rate {
                    gi * self.delta
                } else {
                    gi * gi * self.delta
                }
            })
            .collect()
    }
}

/// Observation process `b = h(x) + noise`, with `h` acting componentwise on the
/// first `obs_dim` state components and independent Gaussian noise of diagonal
/// covariance `noise_cov`.
#[derive(Clone)]
pub struct ObservationModel {
    obs_dim: usize,
    h: ComponentFn,
    dh: ComponentFn,
    noise_cov: Vec<f64>,
    obs_stride: usize,
    linear: bool,
}

impl ObservationModel {
    pub fn new(
        obs_dim: usize,
        h: ComponentFn,
        dh: ComponentFn,
        noise_cov: Vec<f64>,
        obs_stride: usize,
        linear: bool,
    ) -> Self {
        assert!(obs_dim >= 1, "observation dimension must be at least 1");
        assert_eq!(noise_cov.len(), obs_dim);
        assert!(obs_stride >= 1, "observation stride must be at least 1");
        ObservationModel {
            obs_dim,
            h,
            dh,
            noise_cov,
            obs_stride,
            linear,
        }
    }

    /// Scalar observation `b = h(x) + N(0, s)`.
    pub fn scalar(
        h: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dh: impl Fn(f64) -> f64 + Send + Sync + 'static,
        s: f64,
        obs_stride: usize,
        linear: bool,
    ) -> Self {
        Self::new(
            1,
            Arc::new(move |_j, x| h(x)),
            Arc::new(move |_j, x| dh(x)),
            vec![s],
            obs_stride,
            linear,
        )
    }

    /// Identity observation of every component with common noise variance `s`.
    pub fn linear_full(dim: usize, s: f64, obs_stride: usize) -> Self {
        Self::new(
            dim,
            Arc::new(|_j, x| x),
            Arc::new(|_j, _x| 1.0),
            vec![s; dim],
            obs_stride,
            true,
        )
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn obs_stride(&self) -> usize {
        self.obs_stride
    }

    pub fn noise_cov(&self) -> &[f64] {
        &self.noise_cov
    }

    /// Whether every observation component is linear in the state.
    pub fn is_linear(&self) -> bool {
        self.linear
    }

    pub fn component_h(&self, j: usize, x: f64) -> f64 {
        (self.h)(j, x)
    }

    pub fn component_dh(&self, j: usize, x: f64) -> f64 {
        (self.dh)(j, x)
    }

    pub fn component_fns(&self) -> (ComponentFn, ComponentFn) {
        (self.h.clone(), self.dh.clone())
    }

    /// Evaluate the observation function on a state.
    pub fn observe(&self, x: &[f64]) -> Vec<f64> {
        (0..self.obs_dim).map(|j| (self.h)(j, x[j])).collect()
    }
}

/// A simulated state path on the uniform time grid `t_n = t0 + n delta`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// One Euler step: `x + f(x,t) delta + sqrt(step variance) * noise`.
pub fn euler_step(model: &SdeModel, x: &[f64], t: f64, noise: &[f64]) -> Vec<f64> {
    debug_assert_eq!(noise.len(), model.dim());
    let mean = model.euler_mean(x, t);
    let vars = model.step_variances(x, t);
    mean.iter()
        .zip(&vars)
        .zip(noise)
        .map(|((m, v), n)| m + v.max(0.0).sqrt() * n)
        .collect()
}

/// Log density of `x_next` under one Euler step from `x_prev`, normalization
/// constant included.
pub fn transition_logdensity(
    model: &SdeModel,
    x_prev: &[f64],
    x_next: &[f64],
    t: f64,
) -> Result<f64, ModelError> {
    if x_prev.len() != model.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: model.dim(),
            got: x_prev.len(),
        });
    }
    if x_next.len() != model.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: model.dim(),
            got: x_next.len(),
        });
    }
    let mean = model.euler_mean(x_prev, t);
    let vars = model.step_variances(x_prev, t);
    let mut logp = 0.0;
    for (i, ((m, v), xn)) in mean.iter().zip(&vars).zip(x_next).enumerate() {
        if *v <= 0.0 {
            return Err(ModelError::NonPositiveVariance {
                index: i,
                value: *v,
            });
        }
        let r = xn - m;
        logp += -0.5 * r * r / v - 0.5 * (LN_2PI + v.ln());
    }
    Ok(logp)
}

/// Log density of observation `b` given state `x`.
pub fn observation_logdensity(
    obs: &ObservationModel,
    x: &[f64],
    b: &[f64],
) -> Result<f64, ModelError> {
    if b.len() != obs.obs_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: obs.obs_dim(),
            got: b.len(),
        });
    }
    if x.len() < obs.obs_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: obs.obs_dim(),
            got: x.len(),
        });
    }
    let mut logp = 0.0;
    for j in 0..obs.obs_dim() {
        let s = obs.noise_cov()[j];
        if s <= 0.0 {
            return Err(ModelError::NonPositiveVariance { index: j, value: s });
        }
        let r = b[j] - obs.component_h(j, x[j]);
        logp += -0.5 * r * r / s - 0.5 * (LN_2PI + s.ln());
    }
    Ok(logp)
}

/// Run one state path of `n_steps` Euler steps and record a noisy observation
/// at every `obs_stride`-th step. Deterministic given the seed.
pub fn generate_synthetic(
    model: &SdeModel,
    obs: &ObservationModel,
    x0: &[f64],
    n_steps: usize,
    rng_seed: u64,
) -> (Trajectory, Vec<Vec<f64>>) {
    assert!(n_steps >= 1);
    assert_eq!(x0.len(), model.dim());
    let delta = model.delta();
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut observations = Vec::new();
    let mut x = x0.to_vec();
    states.push(x.clone());
    times.push(0.0);
    for n in 0..n_steps {
        let mut rng = stream(rng_seed, StreamKind::Synthetic, 0, n as u64);
        let t = n as f64 * delta;
        let noise: Vec<f64> = (0..model.dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        x = euler_step(model, &x, t, &noise);
        states.push(x.clone());
        times.push((n + 1) as f64 * delta);
        if (n + 1) % obs.obs_stride() == 0 {
            let mut b = obs.observe(&x);
            for (j, bj) in b.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                *bj += obs.noise_cov()[j].max(0.0).sqrt() * e;
            }
            observations.push(b);
        }
    }
    (Trajectory { states, times }, observations)
}

/// Gaussian draws helper: fills a vector with standard normals.
pub fn standard_normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_well() -> SdeModel {
        SdeModel::scalar(|x| -10.0 * x * (x * x - 0.5), 0.1, 0.01, true)
    }

    #[test]
    fn euler_step_zero_drift_zero_noise() {
        let m = SdeModel::scalar(|_| 0.0, 1.0, 0.01, false);
        let x = euler_step(&m, &[0.0], 0.0, &[0.0]);
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn euler_step_drift_term() {
        // x + delta * (-10 x (x^2 - 0.5)) at x = 0.5 gives 0.5125
        let m = double_well();
        let x = euler_step(&m, &[0.5], 0.0, &[0.0]);
        assert!((x[0] - 0.5125).abs() < 1e-15, "got {}", x[0]);
    }

    #[test]
    fn euler_step_linear_in_noise() {
        let m = double_well();
        let base = euler_step(&m, &[0.3], 0.0, &[0.0])[0];
        let one = euler_step(&m, &[0.3], 0.0, &[1.0])[0] - base;
        for alpha in [-2.0, -0.5, 0.7, 3.0] {
            let stepped = euler_step(&m, &[0.3], 0.0, &[alpha])[0] - base;
            assert!((stepped - alpha * one).abs() < 1e-14);
        }
    }

    #[test]
    fn double_well_invariant_density_is_bimodal() {
        // Ensemble of chains started across both basins; after burn-in the
        // empirical density concentrates near +-sqrt(0.5).
        let m = double_well();
        let well = (0.5f64).sqrt();
        let mut near_pos = 0usize;
        let mut near_neg = 0usize;
        let mut total = 0usize;
        for chain in 0..200 {
            let x0 = -1.0 + 2.0 * (chain as f64 + 0.5) / 200.0;
            let mut rng = stream(11, StreamKind::Synthetic, chain as u64, 0);
            let mut x = vec![x0];
            for step in 0..600 {
                let noise = standard_normal_vec(&mut rng, 1);
                x = euler_step(&m, &x, step as f64 * 0.01, &noise);
                if step >= 200 {
                    total += 1;
                    if (x[0] - well).abs() < 0.2 {
                        near_pos += 1;
                    } else if (x[0] + well).abs() < 0.2 {
                        near_neg += 1;
                    }
                }
            }
        }
        let frac = (near_pos + near_neg) as f64 / total as f64;
        assert!(frac > 0.9, "only {frac:.3} of samples near the wells");
        assert!(near_pos as f64 / total as f64 > 0.2);
        assert!(near_neg as f64 / total as f64 > 0.2);
    }

    #[test]
    fn transition_logdensity_standard_normal() {
        let m = SdeModel::scalar(|_| 0.0, 1.0, 1.0, false);
        let lp = transition_logdensity(&m, &[0.0], &[0.0], 0.0).unwrap();
        assert!((lp - (-0.5 * LN_2PI)).abs() < 1e-14);
    }

    #[test]
    fn transition_logdensity_symmetric_without_drift() {
        let m = SdeModel::scalar(|_| 0.0, 0.3, 0.05, false);
        for a in [0.1, 0.7, 2.3] {
            let lp = transition_logdensity(&m, &[0.0], &[a], 0.0).unwrap();
            let lm = transition_logdensity(&m, &[0.0], &[-a], 0.0).unwrap();
            assert!((lp - lm).abs() < 1e-13);
        }
    }

    #[test]
    fn transition_logdensity_rejects_zero_variance() {
        let m = SdeModel::scalar(|_| 0.0, 0.0, 0.01, false);
        assert!(transition_logdensity(&m, &[0.0], &[0.1], 0.0).is_err());
    }

    #[test]
    fn transition_logdensity_matches_step_histogram() {
        // KL divergence between a 10^6-sample histogram of euler_step outputs
        // and the analytic transition density stays below 0.01.
        let m = double_well();
        let x_prev = [0.4];
        let mean = m.euler_mean(&x_prev, 0.0)[0];
        let sd = m.step_variances(&x_prev, 0.0)[0].sqrt();
        let lo = mean - 5.0 * sd;
        let hi = mean + 5.0 * sd;
        let bins = 200usize;
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        let n = 1_000_000usize;
        let mut rng = stream(5, StreamKind::Synthetic, 0, 0);
        for _ in 0..n {
            let noise = standard_normal_vec(&mut rng, 1);
            let x = euler_step(&m, &x_prev, 0.0, &noise)[0];
            if x >= lo && x < hi {
                counts[((x - lo) / width) as usize] += 1;
            }
        }
        let mut kl = 0.0;
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let p_emp = c as f64 / n as f64;
            let center = lo + (i as f64 + 0.5) * width;
            let p_model = transition_logdensity(&m, &x_prev, &[center], 0.0)
                .unwrap()
                .exp()
                * width;
            kl += p_emp * (p_emp / p_model).ln();
        }
        assert!(kl < 0.01, "KL divergence {kl}");
    }

    #[test]
    fn transition_logdensity_normalizes_to_one() {
        let m = double_well();
        let x_prev = [0.4];
        let mean = m.euler_mean(&x_prev, 0.0)[0];
        let sd = m.step_variances(&x_prev, 0.0)[0].sqrt();
        let n = 40_001usize;
        let lo = mean - 8.0 * sd;
        let hi = mean + 8.0 * sd;
        let hstep = (hi - lo) / (n - 1) as f64;
        let mut integral = 0.0;
        for i in 0..n {
            let x = lo + i as f64 * hstep;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            integral += w * transition_logdensity(&m, &x_prev, &[x], 0.0).unwrap().exp();
        }
        integral *= hstep;
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
    }

    #[test]
    fn observation_logdensity_zero_residual() {
        let obs = ObservationModel::scalar(|x| x, |_| 1.0, 0.025, 1, true);
        let lp = observation_logdensity(&obs, &[0.7], &[0.7]).unwrap();
        assert!((lp - (-0.5 * (LN_2PI + 0.025f64.ln()))).abs() < 1e-14);

        let cubic = ObservationModel::scalar(|x| x * x * x, |x| 3.0 * x * x, 0.1, 1, false);
        let lp = observation_logdensity(&cubic, &[1.0], &[1.0]).unwrap();
        assert!((lp - (-0.5 * (LN_2PI + 0.1f64.ln()))).abs() < 1e-14);
    }

    #[test]
    fn observation_logdensity_residual_ratio() {
        let obs = ObservationModel::scalar(|x| x, |_| 1.0, 0.025, 1, true);
        let base = observation_logdensity(&obs, &[0.0], &[0.0]).unwrap();
        for r in [0.1, 0.5] {
            let lp = observation_logdensity(&obs, &[0.0], &[r]).unwrap();
            assert!((lp - base - (-r * r / (2.0 * 0.025))).abs() < 1e-13);
        }
    }

    #[test]
    fn observation_logdensity_dimension_mismatch() {
        let obs = ObservationModel::scalar(|x| x, |_| 1.0, 0.025, 1, true);
        assert!(observation_logdensity(&obs, &[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn synthetic_noiseless_limit_tracks_deterministic_path() {
        let m = SdeModel::scalar(|x| -2.0 * x, 0.0, 0.01, false);
        let obs = ObservationModel::scalar(|x| x, |_| 1.0, 0.0, 1, true);
        let (traj, bs) = generate_synthetic(&m, &obs, &[1.0], 50, 3);
        let mut x = 1.0;
        for (state, b) in traj.states.iter().skip(1).zip(&bs) {
            x += -2.0 * x * 0.01;
            assert!((state[0] - x).abs() < 1e-14);
            assert!((b[0] - x).abs() < 1e-14);
        }
    }

    #[test]
    fn synthetic_is_seed_deterministic() {
        let m = double_well();
        let obs = ObservationModel::scalar(|x| x, |_| 1.0, 0.025, 1, true);
        let (t1, b1) = generate_synthetic(&m, &obs, &[0.0], 100, 9);
        let (t2, b2) = generate_synthetic(&m, &obs, &[0.0], 100, 9);
        assert_eq!(t1.states, t2.states);
        assert_eq!(b1, b2);
        let (_t3, b3) = generate_synthetic(&m, &obs, &[0.0], 100, 10);
        assert_ne!(b1, b3);
    }

    #[test]
    fn synthetic_observation_noise_variance() {
        let m = double_well();
        let s = 0.025;
        let obs = ObservationModel::scalar(|x| x, |_| 1.0, s, 1, true);
        let (traj, bs) = generate_synthetic(&m, &obs, &[0.0], 10_000, 21);
        let residuals: Vec<f64> = bs
            .iter()
            .zip(traj.states.iter().skip(1))
            .map(|(b, x)| b[0] - x[0])
            .collect();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let var = residuals
            .iter()
            .map(|r| (r - mean) * (r - mean))
            .sum::<f64>()
            / residuals.len() as f64;
        assert!((var - s).abs() / s < 0.05, "sample variance {var}");
    }

    #[test]
    fn observation_stride_subsamples() {
        let m = double_well();
        let obs = ObservationModel::scalar(|x| x, |_| 1.0, 0.025, 4, true);
        let (_, bs) = generate_synthetic(&m, &obs, &[0.0], 100, 1);
        assert_eq!(bs.len(), 25);
    }
}
