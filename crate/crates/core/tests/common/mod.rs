//! Random model generators shared by the integration tests.
#![allow(dead_code)]

use fkdmc::engine::{FeynmanKacModel, GaussianFk};
use fkdmc::linalg;
use fkdmc::rng::WalkerRng;
use fkdmc::{GaussianMeasure, GaussianModel, Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    Matrix::from_fn(d, d, |_, _| rng.sample(StandardNormal))
}

/// `M M' / d + floor I`, eigenvalues bounded away from zero.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> Matrix {
    let m = gaussian_matrix(rng, d);
    linalg::symmetrize(&(&m * m.transpose() / d as f64 + Matrix::identity(d, d) * floor))
}

/// Random `(A, B, S)` with `A` rescaled so that `|S^{1/2} A S^{-1/2}|_2 = rho`.
pub fn model_with_rho(rng: &mut ChaCha8Rng, d: usize, rho: f64) -> GaussianModel {
    let b = random_spd(rng, d, 0.2);
    let s = random_spd(rng, d, 0.2);
    let a = gaussian_matrix(rng, d);
    let root = linalg::sym_sqrt(&s).unwrap();
    let inv_root = linalg::sym_inv_sqrt(&s).unwrap();
    let current = linalg::spectral_norm(&(&root * &a * &inv_root));
    GaussianModel::new(a * (rho / current), b, s).unwrap()
}

/// Random model satisfying `A'SA < S` with a margin.
pub fn random_stable_model(rng: &mut ChaCha8Rng, d: usize) -> GaussianModel {
    let rho = rng.random_range(0.1..0.95);
    model_with_rho(rng, d, rho)
}

pub fn random_measure(rng: &mut ChaCha8Rng, d: usize) -> GaussianMeasure {
    let mean = Vector::from_fn(d, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
    GaussianMeasure::new(mean, random_spd(rng, d, 0.1)).unwrap()
}

pub fn max_measure_gap(a: &GaussianMeasure, b: &GaussianMeasure) -> f64 {
    (&a.mean - &b.mean).amax().max(linalg::max_abs_diff(&a.cov, &b.cov))
}

/// Potential multiplied by `exp(log_c)`.
pub struct Scaled<'a> {
    pub inner: &'a GaussianFk,
    pub log_c: f64,
}

impl FeynmanKacModel for Scaled<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn log_potential(&self, step: usize, x: &[f64]) -> f64 {
        self.inner.log_potential(step, x) + self.log_c
    }
    fn sample_initial(&self, rng: &mut WalkerRng, out: &mut [f64]) {
        self.inner.sample_initial(rng, out)
    }
    fn mutate(&self, step: usize, x: &[f64], rng: &mut WalkerRng, out: &mut [f64]) {
        self.inner.mutate(step, x, rng, out)
    }
}
