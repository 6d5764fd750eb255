//! Objective construction, scalar minimization, and U-shaped substitutes.

use std::sync::Arc;

use crate::error::{ModelError, SolverError};
use crate::model::{ObservationModel, SdeModel, LN_2PI};

use super::SampleObjective;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Observation factor of a scalar objective: `(h(x) - b)^2 / (2 s)`.
#[derive(Clone)]
pub struct ScalarObsTerm {
    pub h: ScalarFn,
    pub dh: ScalarFn,
    pub b: f64,
    pub s: f64,
    /// Marks `h` as affine, enabling the one-step closed-form solve.
    pub linear: bool,
}

/// One coordinate of a separable objective.
///
/// `PriorObs` is a Gaussian transition factor with an optional observation
/// factor — the structure the linearization solver needs. `General` is an
/// arbitrary smooth function (backward-sampling factors, substitutes).
#[derive(Clone)]
pub enum ScalarObjective {
    PriorObs {
        mean: f64,
        var: f64,
        obs: Option<ScalarObsTerm>,
    },
    General {
        eval: ScalarFn,
        deriv: ScalarFn,
        hint: f64,
        scale: f64,
    },
}

impl ScalarObjective {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarObjective::PriorObs { mean, var, obs } => {
                let d = x - mean;
                let mut f = 0.5 * d * d / var;
                if let Some(o) = obs {
                    let r = (o.h)(x) - o.b;
                    f += 0.5 * r * r / o.s;
                }
                f
            }
            ScalarObjective::General { eval, .. } => eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            ScalarObjective::PriorObs { mean, var, obs } => {
                let mut g = (x - mean) / var;
                if let Some(o) = obs {
                    g += ((o.h)(x) - o.b) * (o.dh)(x) / o.s;
                }
                g
            }
            ScalarObjective::General { deriv, .. } => deriv(x),
        }
    }

    /// Second derivative by central differences of the first.
    pub fn second_deriv(&self, x: f64) -> f64 {
        let h = 1e-5 * (1.0 + x.abs());
        (self.deriv(x + h) - self.deriv(x - h)) / (2.0 * h)
    }

    /// Natural length scale of the coordinate, used to size scan grids.
    pub fn scale_hint(&self) -> f64 {
        match self {
            ScalarObjective::PriorObs { var, .. } => var.sqrt(),
            ScalarObjective::General { scale, .. } => *scale,
        }
    }

    /// Starting point suggestion for searches.
    pub fn start_hint(&self) -> f64 {
        match self {
            ScalarObjective::PriorObs { mean, .. } => *mean,
            ScalarObjective::General { hint, .. } => *hint,
        }
    }

    pub fn general(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        hint: f64,
        scale: f64,
    ) -> Self {
        ScalarObjective::General {
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            hint,
            scale,
        }
    }
}

/// Objective for one particle moving from `x_prev` toward observation
/// `b_next`: the negative log of transition times observation density, with
/// the constant normalization split into `log_norm`.
pub fn build_objective(
    model: &SdeModel,
    obs: &ObservationModel,
    x_prev: &[f64],
    b_next: &[f64],
    t: f64,
) -> Result<SampleObjective, ModelError> {
    let m = model.dim();
    if x_prev.len() != m {
        return Err(ModelError::DimensionMismatch {
            expected: m,
            got: x_prev.len(),
        });
    }
    if b_next.len() != obs.obs_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: obs.obs_dim(),
            got: b_next.len(),
        });
    }
    let mean = model.euler_mean(x_prev, t);
    let vars = model.step_variances(x_prev, t);
    let (h, dh) = obs.component_fns();
    let mut log_norm = 0.0;
    let mut components = Vec::with_capacity(m);
    for i in 0..m {
        if vars[i] <= 0.0 {
            return Err(ModelError::NonPositiveVariance {
                index: i,
                value: vars[i],
            });
        }
        log_norm += 0.5 * (LN_2PI + vars[i].ln());
        let obs_term = if i < obs.obs_dim() {
            let s = obs.noise_cov()[i];
            if s <= 0.0 {
                return Err(ModelError::NonPositiveVariance { index: i, value: s });
            }
            log_norm += 0.5 * (LN_2PI + s.ln());
            let (h, dh) = (h.clone(), dh.clone());
            Some(ScalarObsTerm {
                h: Arc::new(move |x| h(i, x)),
                dh: Arc::new(move |x| dh(i, x)),
                b: b_next[i],
                s,
                linear: obs.is_linear(),
            })
        } else {
            None
        };
        components.push(ScalarObjective::PriorObs {
            mean: mean[i],
            var: vars[i],
            obs: obs_term,
        });
    }
    Ok(SampleObjective {
        components,
        log_norm,
    })
}

/// Objective for the single-step static problem `F(x) = x^2/(2 sigma) +
/// (h(x) - b)^2/(2 s)`.
pub fn static_objective(
    sigma: f64,
    s: f64,
    b: f64,
    h: impl Fn(f64) -> f64 + Send + Sync + 'static,
    dh: impl Fn(f64) -> f64 + Send + Sync + 'static,
    linear: bool,
) -> SampleObjective {
    let component = ScalarObjective::PriorObs {
        mean: 0.0,
        var: sigma,
        obs: Some(ScalarObsTerm {
            h: Arc::new(h),
            dh: Arc::new(dh),
            b,
            s,
            linear,
        }),
    };
    SampleObjective {
        components: vec![component],
        log_norm: 0.5 * (LN_2PI + sigma.ln()) + 0.5 * (LN_2PI + s.ln()),
    }
}

/// Objective for re-drawing a past position given both neighbours and an
/// optional observation at the middle time: the negative log of
/// `P(X | x_prev) P(b | X) P(x_next | X)`.
///
/// The drift and diffusion entering the second factor are evaluated with the
/// other state components frozen at `frozen`, which is exact for the
/// componentwise models this crate targets.
pub fn backward_objective(
    model: &SdeModel,
    obs: Option<(&ObservationModel, &[f64])>,
    x_prev: &[f64],
    x_next: &[f64],
    frozen: &[f64],
    t: f64,
) -> Result<SampleObjective, ModelError> {
    let m = model.dim();
    if x_prev.len() != m || x_next.len() != m || frozen.len() != m {
        return Err(ModelError::DimensionMismatch {
            expected: m,
            got: x_prev.len(),
        });
    }
    let delta = model.delta();
    let mean0 = model.euler_mean(x_prev, t - delta);
    let vars0 = model.step_variances(x_prev, t - delta);
    let mut log_norm = 0.0;
    let mut components = Vec::with_capacity(m);
    for i in 0..m {
        if vars0[i] <= 0.0 {
            return Err(ModelError::NonPositiveVariance {
                index: i,
                value: vars0[i],
            });
        }
        log_norm += 0.5 * (LN_2PI + vars0[i].ln());
        let (mu0, v0) = (mean0[i], vars0[i]);
        let next_i = x_next[i];
        let model_c = model.clone();
        let mut base = frozen.to_vec();
        let obs_term: Option<(ScalarFn, ScalarFn, f64, f64)> = match obs {
            Some((om, b)) if i < om.obs_dim() => {
                let s = om.noise_cov()[i];
                if s <= 0.0 {
                    return Err(ModelError::NonPositiveVariance { index: i, value: s });
                }
                log_norm += 0.5 * (LN_2PI + s.ln());
                let (h, dh) = om.component_fns();
                let bi = b[i];
                Some((
                    Arc::new(move |x| h(i, x)) as ScalarFn,
                    Arc::new(move |x| dh(i, x)) as ScalarFn,
                    bi,
                    s,
                ))
            }
            _ => None,
        };
        base[i] = 0.0; // placeholder; overwritten per evaluation
        let forward = move |x: f64| -> (f64, f64) {
            // mean and variance of the step X -> x_next in component i
            let mut state = base.clone();
            state[i] = x;
            let mean = model_c.euler_mean(&state, t)[i];
            let var = model_c.step_variances(&state, t)[i];
            (mean, var)
        };
        let fwd = Arc::new(forward);
        let fwd_eval = fwd.clone();
        let obs_eval = obs_term.clone();
        let eval = move |x: f64| -> f64 {
            let d0 = x - mu0;
            let mut f = 0.5 * d0 * d0 / v0;
            let (mean1, var1) = fwd_eval(x);
            let d1 = next_i - mean1;
            // the second factor's normalization depends on x when the
            // diffusion is state-dependent, so it stays inside F
            f += 0.5 * d1 * d1 / var1 + 0.5 * (LN_2PI + var1.ln());
            if let Some((h, _, b, s)) = &obs_eval {
                let r = h(x) - b;
                f += 0.5 * r * r / s;
            }
            f
        };
        let eval_arc: ScalarFn = Arc::new(eval);
        let eval_fd = eval_arc.clone();
        let deriv = move |x: f64| -> f64 {
            let h = 1e-6 * (1.0 + x.abs());
            (eval_fd(x + h) - eval_fd(x - h)) / (2.0 * h)
        };
        components.push(ScalarObjective::General {
            eval: eval_arc.clone(),
            deriv: Arc::new(deriv),
            hint: 0.5 * (mu0 + next_i),
            scale: v0.sqrt(),
        });
    }
    Ok(SampleObjective {
        components,
        log_norm,
    })
}

const GRAD_TOL: f64 = 1e-8;

/// Locate the absolute minimum of a coercive scalar objective: coarse grid
/// scan, golden-section refinement of each candidate basin, Newton polish.
pub fn find_minimum_scalar(obj: &ScalarObjective) -> Result<(f64, f64), SolverError> {
    let scale = obj.scale_hint().max(1e-12);
    let mut centers = vec![obj.start_hint()];
    if let ScalarObjective::PriorObs { obs: Some(o), .. } = obj {
        if let Some(p) = preimage_guess(o, obj.start_hint(), scale) {
            centers.push(p);
        }
    }
    let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * scale;
    let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * scale;
    let n = 2001;
    let step = (hi - lo) / (n - 1) as f64;
    let values: Vec<f64> = (0..n).map(|i| obj.eval(lo + i as f64 * step)).collect();
    // collect local minima brackets (plus the global grid argmin)
    let mut brackets: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if values[i] <= values[i - 1] && values[i] <= values[i + 1] {
            brackets.push(i);
        }
    }
    if brackets.is_empty() {
        return Err(SolverError::MinimizationFailure { lo, hi });
    }
    let mut best: Option<(f64, f64)> = None;
    for &i in &brackets {
        let (mut a, mut b) = (lo + (i - 1) as f64 * step, lo + (i + 1) as f64 * step);
        // golden-section down to a tight bracket
        let inv_phi = 0.618_033_988_749_894_9;
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let (mut f1, mut f2) = (obj.eval(x1), obj.eval(x2));
        for _ in 0..60 {
            if b - a < 1e-10 * scale {
                break;
            }
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = obj.eval(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = obj.eval(x2);
            }
        }
        let mut z = 0.5 * (a + b);
        // Newton polish on the derivative
        for _ in 0..50 {
            let g = obj.deriv(z);
            if g.abs() < GRAD_TOL {
                break;
            }
            let h = obj.second_deriv(z);
            if h <= 0.0 {
                break;
            }
            let step_len = g / h;
            z -= step_len;
            if step_len.abs() < 1e-16 * (1.0 + z.abs()) {
                break;
            }
        }
        let fz = obj.eval(z);
        if best.is_none_or(|(_, fb)| fz < fb) {
            best = Some((z, fz));
        }
    }
    Ok(best.unwrap())
}

/// Componentwise minimum of a separable objective.
pub fn find_minimum(obj: &SampleObjective) -> Result<(Vec<f64>, f64), SolverError> {
    let mut z = Vec::with_capacity(obj.dim());
    let mut total = 0.0;
    for c in &obj.components {
        let (zi, fi) = find_minimum_scalar(c)?;
        z.push(zi);
        total += fi;
    }
    Ok((z, total))
}

/// Rough solution of `h(x) = b` found by a sign-change scan and bisection;
/// used only as a multistart hint.
fn preimage_guess(o: &ScalarObsTerm, center: f64, scale: f64) -> Option<f64> {
    let lo = center - 20.0 * scale;
    let hi = center + 20.0 * scale;
    let n = 400;
    let step = (hi - lo) / n as f64;
    let g = |x: f64| (o.h)(x) - o.b;
    let mut prev = g(lo);
    for i in 1..=n {
        let x = lo + i as f64 * step;
        let cur = g(x);
        if prev == 0.0 {
            return Some(lo + (i - 1) as f64 * step);
        }
        if prev * cur < 0.0 {
            let (mut a, mut b) = (x - step, x);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if g(a) * g(mid) <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev = cur;
    }
    None
}

/// Result of scanning a side of the minimum for monotonicity.
pub(crate) fn monotone_sides(
    obj: &ScalarObjective,
    z: f64,
    half_width: f64,
    n: usize,
) -> (bool, bool) {
    let step = half_width / n as f64;
    let mut left_ok = true;
    let mut right_ok = true;
    let mut prev = obj.eval(z);
    for i in 1..=n {
        let f = obj.eval(z + i as f64 * step);
        if f < prev - 1e-12 * (1.0 + prev.abs()) {
            right_ok = false;
            break;
        }
        prev = f;
    }
    prev = obj.eval(z);
    for i in 1..=n {
        let f = obj.eval(z - i as f64 * step);
        if f < prev - 1e-12 * (1.0 + prev.abs()) {
            left_ok = false;
            break;
        }
        prev = f;
    }
    (left_ok, right_ok)
}

/// Straight-line segment replacing a non-monotone stretch of the objective.
#[derive(Debug, Clone, Copy)]
struct Chord {
    lo: f64,
    hi: f64,
    value_lo: f64,
    slope: f64,
}

impl Chord {
    fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    fn eval(&self, x: f64) -> f64 {
        self.value_lo + self.slope * (x - self.lo)
    }
}

/// U-shaped substitute: equals the original objective on its monotone
/// stretches and replaces each side containing secondary structure by a
/// straight chord ending at the absolute minimum, so that the substitute has
/// the same minimum value and location.
#[derive(Clone)]
pub struct UShapedSubstitute {
    pub original: ScalarObjective,
    pub min_location: f64,
    pub min_value: f64,
    chords: Vec<Chord>,
}

impl UShapedSubstitute {
    /// Build the substitute. `z` and `fz` locate the absolute minimum of the
    /// original objective; sides that are already monotone are kept as-is.
    pub fn build(obj: &ScalarObjective, z: f64, fz: f64) -> Result<Self, SolverError> {
        let scale = obj.scale_hint().max(1e-12);
        let half_width = 5.0 * scale.max(1.0);
        let n = 10_000usize;
        let (left_ok, right_ok) = monotone_sides(obj, z, half_width, n);
        let mut chords = Vec::new();
        if !left_ok {
            chords.push(build_chord(obj, z, fz, -1.0, half_width, n)?);
        }
        if !right_ok {
            chords.push(build_chord(obj, z, fz, 1.0, half_width, n)?);
        }
        let sub = UShapedSubstitute {
            original: obj.clone(),
            min_location: z,
            min_value: fz,
            chords,
        };
        let check = sub.as_objective();
        let (l, r) = monotone_sides(&check, z, half_width, 2_000);
        if !(l && r) {
            return Err(SolverError::NotUShaped {
                side: if l { "right" } else { "left" },
                min_location: z,
            });
        }
        Ok(sub)
    }

    /// Substitute with no chords: the objective was already U-shaped.
    pub fn identity(obj: &ScalarObjective, z: f64, fz: f64) -> Self {
        UShapedSubstitute {
            original: obj.clone(),
            min_location: z,
            min_value: fz,
            chords: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.chords.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        for c in &self.chords {
            if c.contains(x) {
                return c.eval(x);
            }
        }
        self.original.eval(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        for c in &self.chords {
            if c.contains(x) {
                return c.slope;
            }
        }
        self.original.deriv(x)
    }

    /// Bias carried by the substitute at a solved position: added to the
    /// additive factor so that the weight targets the original density,
    /// `phi = min F0 + (F(x) - F0(x))`.
    pub fn phi_correction(&self, x: f64) -> f64 {
        self.original.eval(x) - self.eval(x)
    }

    /// View as a scalar objective for the branch solver.
    pub fn as_objective(&self) -> ScalarObjective {
        let this = self.clone();
        let that = self.clone();
        ScalarObjective::General {
            eval: Arc::new(move |x| this.eval(x)),
            deriv: Arc::new(move |x| that.deriv(x)),
            hint: self.min_location,
            scale: self.original.scale_hint(),
        }
    }
}

/// Find the hump on one side of the minimum and bridge it: locate the local
/// maximum walking away from `z`, pick the level `max + 10%` of the barrier
/// above the trailing local minimum, and chord from where the outer branch
/// crosses that level straight down to `(z, fz)`.
fn build_chord(
    obj: &ScalarObjective,
    z: f64,
    fz: f64,
    side: f64,
    half_width: f64,
    n: usize,
) -> Result<Chord, SolverError> {
    let step = side * half_width / n as f64;
    let side_name = if side > 0.0 { "right" } else { "left" };
    let mut i_peak = None;
    let mut prev = fz;
    let mut idx = 1usize;
    // first decrease marks the peak
    while idx <= n {
        let f = obj.eval(z + idx as f64 * step);
        if f < prev - 1e-12 * (1.0 + prev.abs()) {
            i_peak = Some(idx - 1);
            break;
        }
        prev = f;
        idx += 1;
    }
    let i_peak = i_peak.ok_or(SolverError::NotUShaped {
        side: side_name,
        min_location: z,
    })?;
    let f_peak = obj.eval(z + i_peak as f64 * step);
    // walk down to the secondary minimum
    let mut i_dip = i_peak;
    let mut f_dip = f_peak;
    let mut j = i_peak + 1;
    while j <= n {
        let f = obj.eval(z + j as f64 * step);
        if f > f_dip + 1e-12 * (1.0 + f_dip.abs()) {
            break;
        }
        f_dip = f;
        i_dip = j;
        j += 1;
    }
    let barrier = (f_peak - f_dip).max(0.0);
    let level = f_peak + 0.1 * barrier.max(1e-12 * (1.0 + f_peak.abs()));
    // outer branch crossing of the level
    let mut i_cross = None;
    for k in i_dip..=n {
        if obj.eval(z + k as f64 * step) >= level {
            i_cross = Some(k);
            break;
        }
    }
    let mut x_outer = match i_cross {
        Some(k) => z + k as f64 * step,
        None => {
            // expand beyond the scan window; the objective is coercive
            let mut x = z + n as f64 * step;
            let mut width = half_width;
            loop {
                width *= 2.0;
                x += side * width;
                if obj.eval(x) >= level {
                    break x;
                }
                if width > 1e6 * half_width {
                    return Err(SolverError::NotUShaped {
                        side: side_name,
                        min_location: z,
                    });
                }
            }
        }
    };
    // tighten the crossing by bisection toward the dip
    let mut x_in = z + i_dip as f64 * step;
    for _ in 0..80 {
        let mid = 0.5 * (x_in + x_outer);
        if obj.eval(mid) >= level {
            x_outer = mid;
        } else {
            x_in = mid;
        }
    }
    let x_p = x_outer;
    let (lo, hi, value_lo, slope) = if side > 0.0 {
        (z, x_p, fz, (level - fz) / (x_p - z))
    } else {
        (x_p, z, level, (fz - level) / (z - x_p))
    };
    Ok(Chord {
        lo,
        hi,
        value_lo,
        slope,
    })
}
