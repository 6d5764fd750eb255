//! Solvers for the per-particle algebraic equation `F(X) - phi = xi'xi/2`.
//!
//! Three routes, matched to the shape of `F`:
//!
//! * iterated linearization of the observation function (exact in one step
//!   when the observation is affine),
//! * a safeguarded branch-constrained Newton solve on each side of the
//!   minimum for U-shaped objectives,
//! * the random-direction solve for quadratic forms in several dimensions.
//!
//! Every returned solution satisfies the residual contract
//! `|F(X) - phi - xi'xi/2| <= tol`.

use crate::error::SolverError;

use super::objective::{find_minimum_scalar, monotone_sides, ScalarObjective, UShapedSubstitute};
use super::quadratic::QuadraticForm;
use super::{ImplicitSolution, SampleObjective};

/// Convergence controls shared by the solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Residual tolerance per scalar solve.
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ScalarSolution {
    pub x: f64,
    pub phi: f64,
    pub log_j: f64,
    pub residual: f64,
    pub iterations: u32,
}

/// Pseudo-Gaussian parameters of the objective with the observation function
/// linearized about `y`: `F ~ (x - abar)^2 / (2 vbar) + phi_y`.
fn pseudo_gaussian(
    mean: f64,
    var: f64,
    obs: Option<&super::objective::ScalarObsTerm>,
    y: f64,
) -> (f64, f64, f64) {
    match obs {
        None => (mean, var, 0.0),
        Some(o) => {
            let d = (o.dh)(y);
            let r = o.b - (o.h)(y) + d * y;
            let precision = 1.0 / var + d * d / o.s;
            let vbar = 1.0 / precision;
            let abar = vbar * (mean / var + d * r / o.s);
            let da = abar - mean;
            let ra = d * abar - r;
            let phi = 0.5 * da * da / var + 0.5 * ra * ra / o.s;
            (abar, vbar, phi)
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Jacobian of the solved map at a converged point, by implicit
/// differentiation with `phi` held fixed: `J = |xi| / |F'(X)|`, with the
/// limit `1/sqrt(F''(z))` as `xi -> 0`.
fn log_jacobian_at(obj: &ScalarObjective, x: f64, xi: f64, z: f64) -> Result<f64, SolverError> {
    if xi == 0.0 {
        let d2 = obj.second_deriv(z);
        if d2 <= 0.0 {
            return Err(SolverError::SingularJacobian { x });
        }
        return Ok(-0.5 * d2.ln());
    }
    let g = obj.deriv(x);
    if g.abs() < 1e-300 {
        return Err(SolverError::SingularJacobian { x });
    }
    Ok((xi.abs() / g.abs()).ln())
}

/// Iterated-linearization solve of one scalar component.
///
/// Phase one is the plain pseudo-Gaussian step from the propagated point; for
/// an affine observation it is exact and the solve finishes in one iteration.
/// Otherwise the iteration is anchored at the minimum of `F`, so the returned
/// factor is `phi = min F` and the solution agrees with the branch solver.
pub(crate) fn solve_a_scalar(
    c: &ScalarObjective,
    xi: f64,
    opts: SolveOptions,
    minimum: Option<(f64, f64)>,
) -> Result<ScalarSolution, SolverError> {
    let ScalarObjective::PriorObs { mean, var, obs } = c else {
        // no prior/observation structure to linearize
        return Err(SolverError::NonConvergence {
            max_iter: 0,
            residual: f64::INFINITY,
        });
    };
    let (abar, vbar, phi0) = pseudo_gaussian(*mean, *var, obs.as_ref(), *mean);
    let x1 = abar + vbar.sqrt() * xi;
    let residual = (c.eval(x1) - phi0 - 0.5 * xi * xi).abs();
    if residual <= opts.tol {
        return Ok(ScalarSolution {
            x: x1,
            phi: phi0,
            log_j: 0.5 * vbar.ln(),
            residual,
            iterations: 1,
        });
    }

    // nonlinear observation: anchor the iteration at the minimum
    let (z, fz) = match minimum {
        Some(m) => m,
        None => find_minimum_scalar(c)?,
    };
    if xi == 0.0 {
        return Ok(ScalarSolution {
            x: z,
            phi: fz,
            log_j: log_jacobian_at(c, z, 0.0, z)?,
            residual: 0.0,
            iterations: 1,
        });
    }
    let level = fz + 0.5 * xi * xi;
    let side = sign(xi);
    let mut y = z;
    let mut prev_res = f64::INFINITY;
    let mut best: Option<(f64, f64)> = None;
    for j in 2..=opts.max_iter {
        let (abar, vbar, phi_y) = pseudo_gaussian(*mean, *var, obs.as_ref(), y);
        let t = (level - phi_y).max(0.0);
        let mut x = abar + side * (2.0 * vbar * t).sqrt();
        // iterates stay on the xi side of the minimum
        if side > 0.0 {
            x = x.max(z);
        } else {
            x = x.min(z);
        }
        let res = (c.eval(x) - level).abs();
        if res <= opts.tol {
            return Ok(ScalarSolution {
                x,
                phi: fz,
                log_j: log_jacobian_at(c, x, xi, z)?,
                residual: res,
                iterations: j,
            });
        }
        if best.is_none_or(|(_, rb)| res < rb) {
            best = Some((x, res));
        }
        // damp when the linearization overshoots
        y = if res >= prev_res { 0.5 * (y + x) } else { x };
        prev_res = res;
    }
    Err(SolverError::NonConvergence {
        max_iter: opts.max_iter,
        residual: best.map_or(f64::INFINITY, |(_, r)| r),
    })
}

/// Branch-constrained safeguarded Newton solve of `F(X) = min F + xi^2/2` on
/// the side of the minimum given by the sign of `xi`.
pub(crate) fn solve_b_scalar(
    c: &ScalarObjective,
    z: f64,
    fz: f64,
    xi: f64,
    opts: SolveOptions,
    warm_start: Option<f64>,
) -> Result<ScalarSolution, SolverError> {
    if xi == 0.0 {
        return Ok(ScalarSolution {
            x: z,
            phi: fz,
            log_j: log_jacobian_at(c, z, 0.0, z)?,
            residual: 0.0,
            iterations: 0,
        });
    }
    let level = fz + 0.5 * xi * xi;
    let side = sign(xi);
    let side_name = if side > 0.0 { "right" } else { "left" };

    // expanding bracket away from the minimum; a drop in F on the way out
    // means the objective is not U-shaped on this side
    let d2 = c.second_deriv(z);
    let mut h = if d2 > 0.0 {
        0.7 * xi.abs() / d2.sqrt()
    } else {
        1e-2 * c.scale_hint().max(1e-6)
    }
    .max(1e-12 * (1.0 + z.abs()));
    let mut f_prev = fz;
    let mut hi;
    let mut expansions = 0u32;
    loop {
        hi = z + side * h;
        let f = c.eval(hi);
        if f < f_prev - 1e-12 * (1.0 + f_prev.abs()) {
            return Err(SolverError::NotUShaped {
                side: side_name,
                min_location: z,
            });
        }
        if f >= level {
            break;
        }
        f_prev = f;
        h *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(SolverError::NonConvergence {
                max_iter: opts.max_iter,
                residual: (f - level).abs(),
            });
        }
    }
    // monotonicity spot-check between the minimum and the far end
    let mut prev = fz;
    for k in 1..=24 {
        let f = c.eval(z + side * h * k as f64 / 24.0);
        if f < prev - 1e-12 * (1.0 + prev.abs()) {
            return Err(SolverError::NotUShaped {
                side: side_name,
                min_location: z,
            });
        }
        prev = f;
    }

    // safeguarded Newton in the bracket [near, far]
    let mut near = z;
    let mut far = hi;
    let mut x = match warm_start {
        Some(w) if (w - z) * side > 0.0 && (w - far) * side < 0.0 => w,
        _ => z + side * 0.5 * h,
    };
    let mut iterations = 0u32;
    loop {
        iterations += 1;
        let g = c.eval(x) - level;
        if g.abs() <= opts.tol {
            return Ok(ScalarSolution {
                x,
                phi: fz,
                log_j: log_jacobian_at(c, x, xi, z)?,
                residual: g.abs(),
                iterations,
            });
        }
        if g < 0.0 {
            near = x;
        } else {
            far = x;
        }
        let slope = c.deriv(x);
        let newton = if slope.abs() > 1e-300 {
            x - g / slope
        } else {
            f64::NAN
        };
        let inside =
            newton.is_finite() && (newton - near) * side > 0.0 && (newton - far) * side < 0.0;
        x = if inside { newton } else { 0.5 * (near + far) };
        if iterations >= opts.max_iter {
            return Err(SolverError::NonConvergence {
                max_iter: opts.max_iter,
                residual: g.abs(),
            });
        }
    }
}

fn combine(obj: &SampleObjective, xi: &[f64], parts: Vec<ScalarSolution>) -> ImplicitSolution {
    let position: Vec<f64> = parts.iter().map(|p| p.x).collect();
    let phi: f64 = parts.iter().map(|p| p.phi).sum();
    let log_jacobian: f64 = parts.iter().map(|p| p.log_j).sum();
    let iterations = parts.iter().map(|p| p.iterations).max().unwrap_or(0);
    let xi_sq: f64 = xi.iter().map(|v| v * v).sum();
    let total = (obj.eval(&position) - phi - 0.5 * xi_sq).abs();
    // per-component residuals can cancel in the total; report the larger
    let worst = parts.iter().map(|p| p.residual).fold(0.0f64, f64::max);
    ImplicitSolution {
        position,
        phi,
        log_jacobian,
        residual: total.max(worst),
        iterations,
    }
}

/// Iterated-linearization solve, applied component by component.
pub fn solve_algorithm_a(
    obj: &SampleObjective,
    xi: &[f64],
    opts: SolveOptions,
) -> Result<ImplicitSolution, SolverError> {
    assert_eq!(xi.len(), obj.dim());
    let parts = obj
        .components
        .iter()
        .zip(xi)
        .map(|(c, &x)| solve_a_scalar(c, x, opts, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(combine(obj, xi, parts))
}

/// Branch-constrained Newton solve, applied component by component.
pub fn solve_algorithm_b(
    obj: &SampleObjective,
    xi: &[f64],
    opts: SolveOptions,
) -> Result<ImplicitSolution, SolverError> {
    assert_eq!(xi.len(), obj.dim());
    let mut parts = Vec::with_capacity(obj.dim());
    for (c, &x) in obj.components.iter().zip(xi) {
        let (z, fz) = find_minimum_scalar(c)?;
        parts.push(solve_b_scalar(c, z, fz, x, opts, None)?);
    }
    Ok(combine(obj, xi, parts))
}

/// Random-direction solve of a quadratic form: `X = a + lambda eta` with
/// `eta = xi/|xi|` and `lambda = |xi|/sqrt(trace(A)/m)`. The replacement of
/// the exact radial equation is compensated exactly through the additive
/// factor, and the map is linear, so `J = Lambda^{-m/2}`.
pub fn solve_random_direction(q: &QuadraticForm, xi: &[f64]) -> ImplicitSolution {
    let n = q.dim();
    assert_eq!(xi.len(), n);
    let lambda_bar = q.trace() / n as f64;
    let log_jacobian = -0.5 * n as f64 * lambda_bar.ln();
    let xi_sq: f64 = xi.iter().map(|v| v * v).sum();
    if xi_sq == 0.0 {
        return ImplicitSolution {
            position: q.center().to_vec(),
            phi: q.offset(),
            log_jacobian,
            residual: 0.0,
            iterations: 0,
        };
    }
    let norm = xi_sq.sqrt();
    let eta: Vec<f64> = xi.iter().map(|v| v / norm).collect();
    let lambda = norm / lambda_bar.sqrt();
    let position: Vec<f64> = q
        .center()
        .iter()
        .zip(&eta)
        .map(|(a, e)| a + lambda * e)
        .collect();
    let eta_a_eta = q.quad(&eta);
    let phi = q.offset() + 0.5 * lambda * lambda * (eta_a_eta - lambda_bar);
    let residual = (q.eval(&position) - phi - 0.5 * xi_sq).abs();
    ImplicitSolution {
        position,
        phi,
        log_jacobian,
        residual,
        iterations: 1,
    }
}

/// `|det(dX/dxi)|` by central finite differences of a solver map.
pub fn jacobian_fd(
    mut solve: impl FnMut(&[f64]) -> Result<Vec<f64>, SolverError>,
    xi: &[f64],
    h_fd: f64,
) -> Result<f64, SolverError> {
    let n = xi.len();
    let mut jac = vec![0.0; n * n];
    let mut work = xi.to_vec();
    for j in 0..n {
        work[j] = xi[j] + h_fd;
        let plus = solve(&work)?;
        work[j] = xi[j] - h_fd;
        let minus = solve(&work)?;
        work[j] = xi[j];
        for i in 0..n {
            jac[i * n + j] = (plus[i] - minus[i]) / (2.0 * h_fd);
        }
    }
    Ok(det_abs(n, &mut jac))
}

/// Jacobian of a scalar branch solve by implicit differentiation.
pub fn jacobian_implicit_1d(
    obj: &SampleObjective,
    x: f64,
    xi: f64,
    z: f64,
) -> Result<f64, SolverError> {
    assert_eq!(obj.dim(), 1);
    Ok(log_jacobian_at(&obj.components[0], x, xi, z)?.exp())
}

fn det_abs(n: usize, a: &mut [f64]) -> f64 {
    // in-place LU with partial pivoting
    let mut det: f64 = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
        }
        det *= a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
        }
    }
    det.abs()
}

/// Classified per-component sampling plan for one objective.
///
/// `prepare` does the shape analysis once (minimum, monotonicity scan,
/// substitute construction); `draw` then solves for as many reference draws
/// as needed. This is the automatic fallback chain used by the filter.
pub struct PreparedSampler {
    comps: Vec<PreparedScalar>,
    log_norm: f64,
    dim: usize,
    eval_total: SampleObjective,
}

enum PreparedScalar {
    /// Unobserved coordinate: pure Gaussian transition.
    Gaussian { mean: f64, sd: f64, var_ln: f64 },
    /// Affine observation: closed-form pseudo-Gaussian.
    LinearObs {
        abar: f64,
        vbar: f64,
        phi: f64,
        check: ScalarObjective,
    },
    /// Nonlinear but U-shaped: anchored linearization with Newton fallback.
    NonlinearU { c: ScalarObjective, z: f64, fz: f64 },
    /// Non-U-shaped: branch solve on the substitute, bias folded into phi.
    Substituted {
        sub: UShapedSubstitute,
        f0: ScalarObjective,
    },
}

impl PreparedSampler {
    pub fn prepare(obj: &SampleObjective, opts: SolveOptions) -> Result<Self, SolverError> {
        let mut comps = Vec::with_capacity(obj.dim());
        for c in &obj.components {
            comps.push(Self::prepare_scalar(c, opts)?);
        }
        Ok(PreparedSampler {
            comps,
            log_norm: obj.log_norm,
            dim: obj.dim(),
            eval_total: obj.clone(),
        })
    }

    fn prepare_scalar(
        c: &ScalarObjective,
        _opts: SolveOptions,
    ) -> Result<PreparedScalar, SolverError> {
        if let ScalarObjective::PriorObs { mean, var, obs } = c {
            match obs {
                None => {
                    return Ok(PreparedScalar::Gaussian {
                        mean: *mean,
                        sd: var.sqrt(),
                        var_ln: var.ln(),
                    })
                }
                Some(o) if o.linear => {
                    let (abar, vbar, phi) = pseudo_gaussian(*mean, *var, obs.as_ref(), *mean);
                    return Ok(PreparedScalar::LinearObs {
                        abar,
                        vbar,
                        phi,
                        check: c.clone(),
                    });
                }
                Some(_) => {}
            }
        }
        let (z, fz) = find_minimum_scalar(c)?;
        let scale = c.scale_hint().max(1e-12);
        let (left, right) = monotone_sides(c, z, 5.0 * scale.max(1.0), 2_000);
        if left && right {
            Ok(PreparedScalar::NonlinearU {
                c: c.clone(),
                z,
                fz,
            })
        } else {
            let sub = UShapedSubstitute::build(c, z, fz)?;
            let f0 = sub.as_objective();
            Ok(PreparedScalar::Substituted { sub, f0 })
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Constant split off the negative log density; enters the weight.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn draw(&self, xi: &[f64], opts: SolveOptions) -> Result<ImplicitSolution, SolverError> {
        self.draw_with_hint(xi, opts, None)
    }

    /// Solve with an optional warm start (used when re-solving perturbed
    /// reference values for finite-difference Jacobians).
    pub fn draw_with_hint(
        &self,
        xi: &[f64],
        opts: SolveOptions,
        hint: Option<&[f64]>,
    ) -> Result<ImplicitSolution, SolverError> {
        assert_eq!(xi.len(), self.dim);
        let mut parts = Vec::with_capacity(self.dim);
        for (k, (comp, &x)) in self.comps.iter().zip(xi).enumerate() {
            let warm = hint.map(|h| h[k]);
            let sol = match comp {
                PreparedScalar::Gaussian { mean, sd, var_ln } => ScalarSolution {
                    x: mean + sd * x,
                    phi: 0.0,
                    log_j: 0.5 * var_ln,
                    residual: 0.0,
                    iterations: 1,
                },
                PreparedScalar::LinearObs {
                    abar,
                    vbar,
                    phi,
                    check,
                } => {
                    let pos = abar + vbar.sqrt() * x;
                    let residual = (check.eval(pos) - phi - 0.5 * x * x).abs();
                    ScalarSolution {
                        x: pos,
                        phi: *phi,
                        log_j: 0.5 * vbar.ln(),
                        residual,
                        iterations: 1,
                    }
                }
                PreparedScalar::NonlinearU { c, z, fz } => {
                    match solve_a_scalar(c, x, opts, Some((*z, *fz))) {
                        Ok(s) => s,
                        Err(SolverError::NonConvergence { .. }) => {
                            solve_b_scalar(c, *z, *fz, x, opts, warm)?
                        }
                        Err(e) => return Err(e),
                    }
                }
                PreparedScalar::Substituted { sub, f0 } => {
                    let s = solve_b_scalar(f0, sub.min_location, sub.min_value, x, opts, warm)?;
                    // phi = min F0 + (F(x) - F0(x)) keeps the weight exact
                    ScalarSolution {
                        phi: s.phi + sub.phi_correction(s.x),
                        ..s
                    }
                }
            };
            parts.push(sol);
        }
        Ok(combine(&self.eval_total, xi, parts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::objective::static_objective;

    fn linear_obj(b: f64, sigma: f64, s: f64) -> SampleObjective {
        static_objective(sigma, s, b, |x| x, |_| 1.0, true)
    }

    fn cubic_obj(b: f64) -> SampleObjective {
        static_objective(0.1, 0.1, b, |x| x * x * x, |x| 3.0 * x * x, false)
    }

    /// Independent oracle: bisection solve of `F(X) = min F + xi^2/2` on the
    /// branch matching the sign of `xi`.
    fn bisect_oracle(obj: &SampleObjective, z: f64, fz: f64, xi: f64) -> f64 {
        let c = &obj.components[0];
        let level = fz + 0.5 * xi * xi;
        let side = if xi > 0.0 { 1.0 } else { -1.0 };
        let mut h = 1e-6;
        while c.eval(z + side * h) < level {
            h *= 2.0;
        }
        let (mut near, mut far) = (z, z + side * h);
        for _ in 0..200 {
            let mid = 0.5 * (near + far);
            if c.eval(mid) < level {
                near = mid;
            } else {
                far = mid;
            }
        }
        0.5 * (near + far)
    }

    #[test]
    fn linear_solve_is_closed_form_in_one_iteration() {
        let (sigma, s, b) = (1e-3, 0.025, 0.4);
        let obj = linear_obj(b, sigma, s);
        for xi in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            let sol = solve_algorithm_a(&obj, &[xi], SolveOptions::default()).unwrap();
            assert_eq!(sol.iterations, 1);
            let vbar = 1.0 / (1.0 / sigma + 1.0 / s);
            let abar = vbar * (b / s);
            assert!((sol.position[0] - (abar + vbar.sqrt() * xi)).abs() < 1e-14);
            // min F = (mean - b)^2 / (2 (sigma + s))
            let phi_expect = 0.5 * b * b / (sigma + s);
            assert!(
                (sol.phi - phi_expect).abs() < 1e-12,
                "phi {} vs {}",
                sol.phi,
                phi_expect
            );
            assert!(sol.residual <= 1e-10);
        }
    }

    #[test]
    fn convex_cubic_matches_bisection_oracle() {
        let obj = cubic_obj(0.5);
        let (z, fz) = find_minimum_scalar(&obj.components[0]).unwrap();
        for xi in [-2.0, -1.0, 1.0, 2.0] {
            let sol = solve_algorithm_a(&obj, &[xi], SolveOptions::default()).unwrap();
            let oracle = bisect_oracle(&obj, z, fz, xi);
            assert!(
                (sol.position[0] - oracle).abs() < 1e-8,
                "xi={xi}: {} vs {}",
                sol.position[0],
                oracle
            );
            assert!(sol.residual < 1e-10);
        }
    }

    #[test]
    fn algorithms_agree_on_convex_problems() {
        let obj = cubic_obj(0.5);
        for xi in [-3.0, -0.9, 0.4, 1.7] {
            let a = solve_algorithm_a(&obj, &[xi], SolveOptions::default()).unwrap();
            let b = solve_algorithm_b(&obj, &[xi], SolveOptions::default()).unwrap();
            assert!((a.position[0] - b.position[0]).abs() < 1e-8);
            assert!((a.phi - b.phi).abs() < 1e-9);
        }
    }

    #[test]
    fn branch_solver_zero_xi_returns_minimum() {
        let obj = cubic_obj(0.5);
        let sol = solve_algorithm_b(&obj, &[0.0], SolveOptions::default()).unwrap();
        let (z, fz) = find_minimum_scalar(&obj.components[0]).unwrap();
        assert!((sol.position[0] - z).abs() < 1e-10);
        assert!((sol.phi - fz).abs() < 1e-12);
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn branch_contract_sign() {
        let obj = cubic_obj(0.5);
        let (z, _) = find_minimum_scalar(&obj.components[0]).unwrap();
        for xi in [-2.5, -0.1, 0.1, 2.5] {
            let sol = solve_algorithm_b(&obj, &[xi], SolveOptions::default()).unwrap();
            assert_eq!((sol.position[0] - z) > 0.0, xi > 0.0);
        }
    }

    #[test]
    fn branch_solver_detects_non_u_shape() {
        // b = 1 puts a hump on the left side
        let obj = cubic_obj(1.0);
        let err = solve_algorithm_b(&obj, &[-2.0], SolveOptions::default()).unwrap_err();
        assert!(
            matches!(err, SolverError::NotUShaped { side: "left", .. }),
            "{err:?}"
        );
    }

    #[test]
    fn substitute_solve_matches_bisection_on_each_branch() {
        let obj = cubic_obj(1.0);
        let prep = PreparedSampler::prepare(&obj, SolveOptions::default()).unwrap();
        // oracle works on the substitute itself
        let c = &obj.components[0];
        let (z, fz) = find_minimum_scalar(c).unwrap();
        let sub = UShapedSubstitute::build(c, z, fz).unwrap();
        let f0 = SampleObjective::scalar(sub.as_objective());
        for xi in [-2.0, -1.0, 1.0, 2.0] {
            let sol = prep.draw(&[xi], SolveOptions::default()).unwrap();
            let oracle = bisect_oracle(&f0, z, fz, xi);
            assert!(
                (sol.position[0] - oracle).abs() < 1e-8,
                "xi={xi}: {} vs {}",
                sol.position[0],
                oracle
            );
            // residual contract holds against the original objective with the
            // reported phi
            assert!(sol.residual <= 1e-10, "residual {}", sol.residual);
        }
    }

    #[test]
    fn map_is_strictly_increasing_in_xi() {
        for obj in [linear_obj(2.0, 0.1, 0.1), cubic_obj(0.5), cubic_obj(1.0)] {
            let prep = PreparedSampler::prepare(&obj, SolveOptions::default()).unwrap();
            let mut prev = f64::NEG_INFINITY;
            let mut xi = -4.0;
            while xi <= 4.0 {
                let sol = prep.draw(&[xi], SolveOptions::default()).unwrap();
                assert!(
                    sol.position[0] > prev,
                    "map not increasing at xi={xi}: {} <= {prev}",
                    sol.position[0]
                );
                prev = sol.position[0];
                xi += 0.01;
            }
        }
    }

    #[test]
    fn jacobian_identity_map() {
        // F = x^2/2 is the reference density itself: J = 1 for all xi
        let comp = ScalarObjective::general(|x| 0.5 * x * x, |x| x, 0.0, 1.0);
        let obj = SampleObjective::scalar(comp);
        for xi in [-1.5, -0.2, 0.9, 2.4] {
            let sol = solve_algorithm_b(&obj, &[xi], SolveOptions::default()).unwrap();
            assert!(
                (sol.log_jacobian).abs() < 1e-9,
                "log J = {}",
                sol.log_jacobian
            );
            assert!((sol.position[0] - xi).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobian_fd_matches_implicit_differentiation() {
        let obj = cubic_obj(0.5);
        let tight = SolveOptions {
            tol: 1e-13,
            max_iter: 200,
        };
        let prep = PreparedSampler::prepare(&obj, tight).unwrap();
        for xi in [-1.8, -0.6, 0.4, 1.3] {
            let sol = prep.draw(&[xi], tight).unwrap();
            let (z, _) = find_minimum_scalar(&obj.components[0]).unwrap();
            let j_impl = jacobian_implicit_1d(&obj, sol.position[0], xi, z).unwrap();
            let base = sol.position.clone();
            let j_fd = jacobian_fd(
                |x| {
                    prep.draw_with_hint(x, tight, Some(&base))
                        .map(|s| s.position)
                },
                &[xi],
                1e-4,
            )
            .unwrap();
            assert!(
                (j_impl - j_fd).abs() / j_impl < 1e-5,
                "xi={xi}: implicit {j_impl} vs fd {j_fd}"
            );
        }
    }

    #[test]
    fn random_direction_identity_matrix() {
        let q = QuadraticForm::new(vec![1.0, -2.0], vec![1.0, 0.0, 0.0, 1.0], 0.3).unwrap();
        let sol = solve_random_direction(&q, &[0.5, -1.5]);
        assert!((sol.position[0] - 1.5).abs() < 1e-14);
        assert!((sol.position[1] + 3.5).abs() < 1e-14);
        assert!((sol.phi - 0.3).abs() < 1e-14);
        assert!(sol.log_jacobian.abs() < 1e-14);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn random_direction_scalar_is_exact() {
        let c = 4.0;
        let q = QuadraticForm::new(vec![0.7], vec![c], 1.1).unwrap();
        for xi in [-2.0, 0.0, 0.5, 3.0] {
            let sol = solve_random_direction(&q, &[xi]);
            assert!((sol.position[0] - (0.7 + xi / c.sqrt())).abs() < 1e-14);
            assert!(
                (sol.phi - 1.1).abs() < 1e-13,
                "phi correction should vanish"
            );
            assert!(sol.residual < 1e-12);
        }
    }
}
