//! Independent quadrature route for one-dimensional posteriors, and the
//! equal-probability histogram diagnostic.
//!
//! These are the reference answers the samplers are checked against: a dense
//! trapezoid normalization of `exp(-F)` gives means, variances, quantiles and
//! a CDF table, and the histogram counts how often proposal samples land in
//! posterior deciles (flat means perfect importance sampling).

use crate::error::OracleError;

/// Normalized posterior on a uniform grid, built from a 1-D objective by
/// trapezoid quadrature in log space.
#[derive(Debug, Clone)]
pub struct QuadraturePosterior {
    lo: f64,
    hi: f64,
    step: f64,
    /// Normalized density values at grid points.
    density: Vec<f64>,
    /// CDF at grid points; cdf[0] = 0, cdf[n-1] = 1.
    cdf: Vec<f64>,
}

impl QuadraturePosterior {
    /// Build from `F` on `[lo, hi]` with `n_points` grid points. Errors if
    /// the boundary density is not negligible relative to the mode.
    pub fn build(
        f: impl Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        n_points: usize,
    ) -> Result<Self, OracleError> {
        if n_points < 2 {
            return Err(OracleError::GridTooSmall(n_points));
        }
        let step = (hi - lo) / (n_points - 1) as f64;
        let logs: Vec<f64> = (0..n_points).map(|i| -f(lo + i as f64 * step)).collect();
        let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let boundary = logs[0].max(logs[n_points - 1]);
        let ratio = (boundary - max_log).exp();
        if ratio > 1e-12 {
            return Err(OracleError::TailMass { lo, hi, ratio });
        }
        let mut density: Vec<f64> = logs.iter().map(|l| (l - max_log).exp()).collect();
        let mut z = 0.0;
        for i in 0..n_points - 1 {
            z += 0.5 * (density[i] + density[i + 1]) * step;
        }
        for d in density.iter_mut() {
            *d /= z;
        }
        let mut cdf = vec![0.0; n_points];
        for i in 1..n_points {
            cdf[i] = cdf[i - 1] + 0.5 * (density[i - 1] + density[i]) * step;
        }
        // guard against rounding drift at the right end
        let total = cdf[n_points - 1];
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(QuadraturePosterior {
            lo,
            hi,
            step,
            density,
            cdf,
        })
    }

    /// Build with an automatic grid: a coarse pilot pass over `[pilot_lo,
    /// pilot_hi]` estimates mean and standard deviation, then the final grid
    /// covers mean +- 10 sd with `n_points` points.
    pub fn auto(
        f: impl Fn(f64) -> f64,
        pilot_lo: f64,
        pilot_hi: f64,
        n_points: usize,
    ) -> Result<Self, OracleError> {
        let pilot = {
            let n = 4001;
            let step = (pilot_hi - pilot_lo) / (n - 1) as f64;
            let logs: Vec<f64> = (0..n).map(|i| -f(pilot_lo + i as f64 * step)).collect();
            let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|l| (l - max_log).exp()).collect();
            let z: f64 = w.iter().sum();
            let mean: f64 = w
                .iter()
                .enumerate()
                .map(|(i, wi)| wi * (pilot_lo + i as f64 * step))
                .sum::<f64>()
                / z;
            let var: f64 = w
                .iter()
                .enumerate()
                .map(|(i, wi)| {
                    let x = pilot_lo + i as f64 * step;
                    wi * (x - mean) * (x - mean)
                })
                .sum::<f64>()
                / z;
            (mean, var.sqrt())
        };
        let (mean, sd) = pilot;
        let sd = sd.max(1e-8);
        // widen past the default ten standard deviations until the boundary
        // density is negligible (non-Gaussian tails may need more room)
        let mut width = 10.0 * sd;
        loop {
            match Self::build(&f, mean - width, mean + width, n_points) {
                Err(OracleError::TailMass { .. }) if width < 1e4 * sd => width *= 1.5,
                other => return other,
            }
        }
    }

    pub fn grid_len(&self) -> usize {
        self.density.len()
    }

    pub fn mean(&self) -> f64 {
        self.moment(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(|x| (x - m) * (x - m))
    }

    fn moment(&self, g: impl Fn(f64) -> f64) -> f64 {
        let n = self.density.len();
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let x0 = self.lo + i as f64 * self.step;
            let x1 = x0 + self.step;
            acc += 0.5 * (g(x0) * self.density[i] + g(x1) * self.density[i + 1]) * self.step;
        }
        acc
    }

    /// CDF by linear interpolation of the grid table.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let u = (x - self.lo) / self.step;
        let i = (u as usize).min(self.cdf.len() - 2);
        let frac = u - i as f64;
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Inverse CDF by binary search plus linear interpolation.
    pub fn quantile(&self, p: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&p));
        let i = self.cdf.partition_point(|&c| c < p);
        if i == 0 {
            return self.lo;
        }
        if i >= self.cdf.len() {
            return self.hi;
        }
        let c0 = self.cdf[i - 1];
        let c1 = self.cdf[i];
        let frac = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
        self.lo + ((i - 1) as f64 + frac) * self.step
    }

    /// Kolmogorov-Smirnov distance between a weighted sample set and this
    /// posterior.
    pub fn ks_distance(&self, samples: &[(f64, f64)]) -> f64 {
        let mut sorted: Vec<(f64, f64)> = samples.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = sorted.iter().map(|(_, w)| w).sum();
        let mut acc = 0.0;
        let mut ks = 0.0f64;
        for (x, w) in &sorted {
            let c = self.cdf(*x);
            ks = ks.max((acc / total - c).abs());
            acc += w;
            ks = ks.max((acc / total - c).abs());
        }
        ks
    }
}

/// Partition points `Y_1 .. Y_{K-1}` such that the posterior probability of
/// `(-inf, Y_k]` is `k/K`.
pub fn equal_probability_partition(q: &QuadraturePosterior, k: usize) -> Vec<f64> {
    assert!(k >= 2, "need at least two intervals");
    (1..k).map(|j| q.quantile(j as f64 / k as f64)).collect()
}

/// Histogram of weighted samples over the partition intervals
/// `(Y_{k-1}, Y_k]` with `Y_0 = -inf`, `Y_K = +inf`.
#[derive(Debug, Clone)]
pub struct RnHistogram {
    pub partition: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub sample_count: usize,
    masses: Vec<f64>,
    total: f64,
}

impl RnHistogram {
    pub fn new(partition: Vec<f64>) -> Self {
        let k = partition.len() + 1;
        RnHistogram {
            partition,
            frequencies: vec![0.0; k],
            sample_count: 0,
            masses: vec![0.0; k],
            total: 0.0,
        }
    }

    pub fn accumulate(&mut self, x: f64, weight: f64) {
        let bin = self.partition.partition_point(|&y| y < x);
        self.masses[bin] += weight;
        self.total += weight;
        self.sample_count += 1;
        self.refresh();
    }

    pub fn accumulate_all(&mut self, samples: impl IntoIterator<Item = (f64, f64)>) {
        for (x, w) in samples {
            let bin = self.partition.partition_point(|&y| y < x);
            self.masses[bin] += w;
            self.total += w;
            self.sample_count += 1;
        }
        self.refresh();
    }

    /// Merge a shard accumulated over the same partition.
    pub fn merge(&mut self, other: &RnHistogram) {
        assert_eq!(self.partition, other.partition);
        for (m, o) in self.masses.iter_mut().zip(&other.masses) {
            *m += o;
        }
        self.total += other.total;
        self.sample_count += other.sample_count;
        self.refresh();
    }

    fn refresh(&mut self) {
        if self.total > 0.0 {
            for (f, m) in self.frequencies.iter_mut().zip(&self.masses) {
                *f = m / self.total;
            }
        }
    }

    /// Chi-squared statistic against the flat 1/K reference.
    pub fn chi_squared(&self) -> f64 {
        let k = self.frequencies.len() as f64;
        let expected = 1.0 / k;
        self.frequencies
            .iter()
            .map(|f| (f - expected) * (f - expected) / expected)
            .sum::<f64>()
            * self.total
    }
}

/// Bin weighted samples into the equal-probability intervals of a posterior.
pub fn rn_histogram(
    samples: impl IntoIterator<Item = (f64, f64)>,
    q: &QuadraturePosterior,
    k: usize,
) -> RnHistogram {
    let mut hist = RnHistogram::new(equal_probability_partition(q, k));
    hist.accumulate_all(samples);
    hist
}
