//! Quadratic-form representation `F(X) = offset + (X-a)' A (X-a) / 2` and the
//! small dense linear algebra it needs.

use crate::error::SolverError;

/// Symmetric positive-definite quadratic form centered at `a`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    center: Vec<f64>,
    matrix: Vec<f64>, // row-major n x n
    chol: Vec<f64>,   // lower-triangular factor, row-major
    offset: f64,
    dim: usize,
}

impl QuadraticForm {
    pub fn new(center: Vec<f64>, matrix: Vec<f64>, offset: f64) -> Result<Self, SolverError> {
        let n = center.len();
        assert_eq!(matrix.len(), n * n, "matrix must be n x n");
        let mut norm: f64 = 0.0;
        for v in &matrix {
            norm = norm.max(v.abs());
        }
        for i in 0..n {
            for j in 0..i {
                if (matrix[i * n + j] - matrix[j * n + i]).abs() > 1e-12 * norm.max(1.0) {
                    return Err(SolverError::BadQuadraticForm {
                        reason: format!("asymmetric entry ({i},{j})"),
                    });
                }
            }
        }
        let chol = cholesky(n, &matrix).ok_or_else(|| SolverError::BadQuadraticForm {
            reason: "matrix is not positive definite".into(),
        })?;
        Ok(QuadraticForm {
            center,
            matrix,
            chol,
            offset,
            dim: n,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.matrix[i * self.dim + i]).sum()
    }

    /// `y' A y` for a direction `y`.
    pub fn quad(&self, y: &[f64]) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            let row: f64 = self.matrix[i * n..(i + 1) * n]
                .iter()
                .zip(y)
                .map(|(a, yj)| a * yj)
                .sum();
            acc += y[i] * row;
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(xi, ai)| xi - ai).collect();
        self.offset + 0.5 * self.quad(&y)
    }

    /// Draw from the Gaussian `N(a, A^{-1})` by solving `L' y = xi`.
    /// This is the direct-sampling oracle route.
    #[allow(clippy::needless_range_loop)] // triangular back-substitution
    pub fn gaussian_draw(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = vec![0.0; n];
        for irev in (0..n).rev() {
            let mut sum = xi[irev];
            for k in irev + 1..n {
                sum -= self.chol[k * n + irev] * y[k];
            }
            y[irev] = sum / self.chol[irev * n + irev];
        }
        y.iter().zip(&self.center).map(|(yi, ai)| yi + ai).collect()
    }
}

/// Dense lower Cholesky factor; `None` when the matrix is not positive
/// definite.
pub(crate) fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

pub(crate) fn chol_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut w = x.to_vec();
    for i in 0..n {
        let h = 1e-6 * (1.0 + x[i].abs());
        w[i] = x[i] + h;
        let fp = f(&w);
        w[i] = x[i] - h;
        let fm = f(&w);
        w[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut hess = vec![0.0; n * n];
    let f0 = f(x);
    let steps: Vec<f64> = x.iter().map(|xi| 1e-4 * (1.0 + xi.abs())).collect();
    let mut w = x.to_vec();
    for i in 0..n {
        w[i] = x[i] + steps[i];
        let fp = f(&w);
        w[i] = x[i] - steps[i];
        let fm = f(&w);
        w[i] = x[i];
        hess[i * n + i] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
    }
    for i in 0..n {
        for j in 0..i {
            w[i] = x[i] + steps[i];
            w[j] = x[j] + steps[j];
            let fpp = f(&w);
            w[j] = x[j] - steps[j];
            let fpm = f(&w);
            w[i] = x[i] - steps[i];
            let fmm = f(&w);
            w[j] = x[j] + steps[j];
            let fmp = f(&w);
            w[i] = x[i];
            w[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
            hess[i * n + j] = v;
            hess[j * n + i] = v;
        }
    }
    hess
}

/// Damped Newton minimization with finite-difference derivatives, with a
/// gradient-descent fallback when the Hessian is not positive definite.
pub fn minimize_smooth(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    grad_tol: f64,
    max_iter: u32,
) -> Result<(Vec<f64>, f64), SolverError> {
    let n = start.len();
    let mut x = start.to_vec();
    let mut fx = f(&x);
    for _ in 0..max_iter {
        let g = fd_gradient(f, &x);
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < grad_tol {
            return Ok((x, fx));
        }
        let hess = fd_hessian(f, &x);
        let dir = match cholesky(n, &hess) {
            Some(l) => chol_solve(n, &l, &g),
            None => {
                let scale = 1.0 / (1.0 + gnorm);
                g.iter().map(|gi| gi * scale).collect()
            }
        };
        // backtracking line search on the descent direction
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi - step * di).collect();
            let ft = f(&trial);
            if ft < fx {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent possible beyond rounding; treat as converged if the
            // gradient is small in relative terms
            if gnorm < 1e-6 * (1.0 + fx.abs()) {
                return Ok((x, fx));
            }
            return Err(SolverError::NonConvergence {
                max_iter,
                residual: gnorm,
            });
        }
    }
    let g = fd_gradient(f, &x);
    let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gnorm < grad_tol.max(1e-6) {
        Ok((x, fx))
    } else {
        Err(SolverError::NonConvergence {
            max_iter,
            residual: gnorm,
        })
    }
}

/// Quadratic model of a smooth function at its minimum, from a
/// finite-difference Hessian.
pub fn quadratic_form_at_minimum(
    f: &dyn Fn(&[f64]) -> f64,
    argmin: &[f64],
) -> Result<QuadraticForm, SolverError> {
    let mut hess = fd_hessian(f, argmin);
    let n = argmin.len();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (hess[i * n + j] + hess[j * n + i]);
            hess[i * n + j] = avg;
            hess[j * n + i] = avg;
        }
    }
    QuadraticForm::new(argmin.to_vec(), hess, f(argmin))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_round_trip() {
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let l = cholesky(2, &a).unwrap();
        // L L' == A
        let mut prod = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    prod[i * 2 + j] += l[i * 2 + k] * l[j * 2 + k];
                }
            }
        }
        for (p, e) in prod.iter().zip(&a) {
            assert!((p - e).abs() < 1e-12);
        }
        let x = chol_solve(2, &l, &[1.0, 2.0]);
        // A x = b
        assert!((4.0 * x[0] + 2.0 * x[1] - 1.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(QuadraticForm::new(vec![0.0, 0.0], vec![1.0, 0.5, 0.2, 1.0], 0.0).is_err());
        assert!(QuadraticForm::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn minimize_quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + 3.0;
        let (z, fz) = minimize_smooth(&f, &[4.0, 4.0], 1e-9, 100).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-6);
        assert!((z[1] + 0.5).abs() < 1e-6);
        assert!((fz - 3.0).abs() < 1e-10);
    }

    #[test]
    fn quadratic_model_reproduces_quadratic() {
        let f = |x: &[f64]| 1.5 + 0.5 * (2.0 * x[0] * x[0] + x[1] * x[1] + x[0] * x[1]);
        let q = quadratic_form_at_minimum(&f, &[0.0, 0.0]).unwrap();
        for p in [[0.3, -0.2], [1.0, 1.0], [-0.7, 0.4]] {
            assert!((q.eval(&p) - f(&p)).abs() < 1e-6, "at {p:?}");
        }
    }
}
