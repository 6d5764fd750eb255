//! Implicit particle filtering for data assimilation of Ito SDEs.
//!
//! Particles are guided to the high-probability region one at a time: for
//! each particle a Gaussian reference vector `xi` is drawn first, and the new
//! position `X` is then found by solving `F(X) - phi = xi'xi/2`, where
//! `exp(-F)` is the product of the transition and observation densities of
//! that particle. The importance weight is `exp(-phi) J`, with `J` the
//! Jacobian of the map `xi -> X`.
//!
//! The crate provides:
//!
//! * [`model`] — SDE and observation models, Euler discretization, synthetic
//!   data generation;
//! * [`sampler`] — the per-particle objectives and the solvers that place
//!   particles (iterated linearization, branch-constrained Newton, U-shaped
//!   substitutes, the random-direction solve for quadratic forms);
//! * [`filter`] — the sequential filter engine with multinomial resampling,
//!   a prior-proposal baseline, backward re-draws and joint gap solves;
//! * [`oracle`] — quadrature reference posteriors and the equal-probability
//!   histogram diagnostic;
//! * [`ident`] — diffusion-parameter identification by stochastic
//!   approximation over repeated filter runs;
//! * [`config`] — plain-text model configuration;
//! * [`rng`] — counter-based deterministic random streams.

pub mod config;
pub mod error;
pub mod filter;
pub mod ident;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
