//! Per-particle objectives and the algebraic solvers that place particles.
//!
//! A particle move is drawn by sampling a Gaussian reference vector `xi` and
//! solving
//!
//! ```text
//!     F(X) - phi = xi' xi / 2
//! ```
//!
//! for the new position `X`, where `F` is the negative log of the product of
//! the transition and observation densities (constants split off into
//! [`SampleObjective::log_norm`]). The additive factor `phi` and the Jacobian
//! `J` of the map `xi -> X` enter the importance weight `exp(-phi) J`.

mod objective;
mod quadratic;
mod solvers;

pub use objective::{
    backward_objective, build_objective, find_minimum, find_minimum_scalar, static_objective,
    ScalarObjective, ScalarObsTerm, UShapedSubstitute,
};
pub use quadratic::{minimize_smooth, quadratic_form_at_minimum, QuadraticForm};
pub use solvers::{
    jacobian_fd, jacobian_implicit_1d, solve_algorithm_a, solve_algorithm_b,
    solve_random_direction, PreparedSampler, SolveOptions,
};

use std::sync::Arc;

/// A separable per-particle objective: `F(X) = sum_i F_i(X_i)` plus the
/// constant `log_norm` split off from the negative log densities.
///
/// The weight of a solved sample is `exp(-(phi + log_norm)) * J`; `log_norm`
/// only matters when it varies across particles (state-dependent diffusion).
#[derive(Clone)]
pub struct SampleObjective {
    pub components: Vec<ScalarObjective>,
    pub log_norm: f64,
}

impl SampleObjective {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.components.len());
        self.components
            .iter()
            .zip(x)
            .map(|(c, xi)| c.eval(*xi))
            .sum()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .zip(x)
            .map(|(c, xi)| c.deriv(*xi))
            .collect()
    }

    pub fn scalar(component: ScalarObjective) -> Self {
        SampleObjective {
            components: vec![component],
            log_norm: 0.0,
        }
    }
}

/// Shared callable on a stacked state vector.
pub type VectorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A non-separable objective on a stacked state vector, used for joint solves
/// over observation gaps.
#[derive(Clone)]
pub struct JointObjective {
    pub dim: usize,
    eval: VectorFn,
}

impl JointObjective {
    pub fn new(dim: usize, eval: VectorFn) -> Self {
        JointObjective { dim, eval }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
}

/// Result of solving the implicit equation for one particle.
#[derive(Debug, Clone)]
pub struct ImplicitSolution {
    /// New particle position.
    pub position: Vec<f64>,
    /// Additive factor; the sample weight is `exp(-(phi + log_norm)) * J`.
    pub phi: f64,
    /// Log of the Jacobian determinant of the map `xi -> X`.
    pub log_jacobian: f64,
    /// `|F(X) - phi - xi'xi/2|` at the returned position.
    pub residual: f64,
    /// Iterations used by the slowest component.
    pub iterations: u32,
}
