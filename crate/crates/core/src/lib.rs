//! Fixed-population diffusion Monte Carlo (DMC) for discrete-time
//! Feynman-Kac models, together with the closed-form solution of the
//! linear-Gaussian ("coupled harmonic oscillator") case.
//!
//! The Gaussian model `(A, B, S)` has mutation kernel `N(Ax, B)` and
//! potential `exp(-x'Sx/2)`. Its Feynman-Kac flow stays Gaussian and is
//! computed exactly by Kalman/Riccati recursions in [`gaussian`]; the walker
//! engine in [`engine`] approximates the same flow with `N` interacting
//! walkers, so every stochastic estimate has an exact reference.
//!
//! Module map:
//!
//! * [`gaussian`]: exact flow, ground state, semigroup powers, updated-measure
//!   model and time discretization of linear SDEs.
//! * [`oracle`]: brute-force grid discretization of the 1-d integral operator.
//! * [`engine`]: walker ensembles, selection policies, mutation and estimators.
//! * [`importance`]: k-step conditional free evolution models.
//! * [`analysis`]: stability certificates, total-variation bounds, asymptotic
//!   variance and the replicated convergence/divergence experiments.
//! * [`io`]: the text schema for Gaussian models.

// Guards are written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
pub mod error;
pub mod exec;
pub mod gaussian;
pub mod importance;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use gaussian::{GaussianMeasure, GaussianModel, GroundStateTriple};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
