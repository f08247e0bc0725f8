//! Conditional free evolutions: k-step importance models.
//!
//! Grouping `k` steps of `Q = G P` gives `Q^k = G^(k) P^(k)` with
//! `G^(k) ∝ exp(-x' S_k x / 2)` and `P^(k)(x, .) = N(A_k x, B_k)`. Running the
//! walker engine on this model visits every `k`-th measure of the original
//! flow; for `k` large enough the grouped model satisfies `A_k' S_k A_k < S_k`
//! even when the base model does not, and its walker approximation becomes
//! uniformly stable in time.

use serde::Serialize;

use crate::engine::{FeynmanKacModel, GaussianFk};
use crate::gaussian::{exact_flow, hat_model, propagator_powers, GaussianMeasure, GaussianModel, PropagatorPowers};
use crate::linalg;
use crate::rng::WalkerRng;
use crate::{Error, Result};

/// Which measures of the base model the k-step flow visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KStepTarget {
    /// Powers of `Q` started at `eta_0`: step `n` is `eta_{nk}`.
    Predicted,
    /// Powers of the updated-measure model `(Ghat, Phat)` started at
    /// `psi_G(eta_0)`: step `n` is `psi_G(eta_{nk})`.
    Updated,
    /// Offset system `r` of the gap-filling mode: step `n` is `eta_{nk + r}`.
    Offset(usize),
}

/// The k-step model together with its initial measure. Its potential is
/// normalized to equal 1 at the origin.
#[derive(Debug, Clone)]
pub struct KStepModel {
    pub k: usize,
    pub base: GaussianModel,
    pub powers: PropagatorPowers,
    pub target: KStepTarget,
    /// Gaussian model `(A_k, B_k, S_k)`.
    pub grouped: GaussianModel,
    fk: GaussianFk,
}

impl KStepModel {
    fn assemble(k: usize, base: &GaussianModel, source: &GaussianModel, start: GaussianMeasure, target: KStepTarget) -> Result<Self> {
        let powers = propagator_powers(source, k)?;
        let mut grouped =
            GaussianModel::with_semidefinite_potential(powers.a_k.clone(), powers.b_k.clone(), powers.s_k.clone())?;
        if let Some(dt) = base.time_step() {
            grouped = grouped.with_time_step(dt * k as f64);
        }
        Ok(Self {
            k,
            base: base.clone(),
            powers,
            target,
            fk: GaussianFk::new(grouped.clone(), start)?,
            grouped,
        })
    }

    pub fn initial(&self) -> &GaussianMeasure {
        self.fk.initial()
    }

    /// `G^(k)(x) = exp(-x' S_k x / 2)`, in `(0, 1]`.
    pub fn normalized_potential(&self, x: &[f64]) -> f64 {
        self.fk.log_potential(0, x).exp()
    }

    /// Exact flow of the k-step model, `n + 1` measures.
    pub fn exact_flow(&self, n: usize) -> Result<Vec<GaussianMeasure>> {
        exact_flow(&self.grouped, self.initial(), n)
    }

    /// The base-model measures this model is meant to visit at steps `0..=n`,
    /// computed from the base flow alone.
    pub fn target_flow(&self, eta0: &GaussianMeasure, n: usize) -> Result<Vec<GaussianMeasure>> {
        let offset = match self.target {
            KStepTarget::Offset(r) => r,
            _ => 0,
        };
        let base = exact_flow(&self.base, eta0, n * self.k + offset)?;
        (0..=n)
            .map(|i| {
                let mu = &base[i * self.k + offset];
                match self.target {
                    KStepTarget::Updated => self.base.update(mu),
                    _ => Ok(mu.clone()),
                }
            })
            .collect()
    }
}

impl FeynmanKacModel for KStepModel {
    fn dim(&self) -> usize {
        self.fk.dim()
    }
    fn log_potential(&self, step: usize, x: &[f64]) -> f64 {
        self.fk.log_potential(step, x)
    }
    fn log_potential_bound(&self) -> f64 {
        0.0
    }
    fn sample_initial(&self, rng: &mut WalkerRng, out: &mut [f64]) {
        self.fk.sample_initial(rng, out)
    }
    fn mutate(&self, step: usize, x: &[f64], rng: &mut WalkerRng, out: &mut [f64]) {
        self.fk.mutate(step, x, rng, out)
    }
    fn time_step(&self) -> Option<f64> {
        self.fk.time_step()
    }
}

/// k-step model of `Q` started at `eta_0`; its step `n` is `eta_{nk}`.
/// `k = 1` is the base model itself.
pub fn build_k_step(model: &GaussianModel, k: usize, eta0: &GaussianMeasure) -> Result<KStepModel> {
    KStepModel::assemble(k, model, model, eta0.clone(), KStepTarget::Predicted)
}

/// k-step model of the updated-measure operators started at `psi_G(eta_0)`;
/// its step `n` is `psi_G(eta_{nk})`.
pub fn build_updated_k_step(model: &GaussianModel, k: usize, eta0: &GaussianMeasure) -> Result<KStepModel> {
    let hat = hat_model(model)?;
    KStepModel::assemble(k, model, &hat.model, model.update(eta0)?, KStepTarget::Updated)
}

/// Gap-filling mode: `k` independent k-step systems, system `r` started at
/// `eta_r` and visiting `eta_{nk + r}`, so that together they cover every
/// time index. More expensive than a single system by a factor `k`.
///
/// The offset starts `eta_r` are taken from the exact Gaussian flow.
pub fn build_offset_systems(model: &GaussianModel, k: usize, eta0: &GaussianMeasure) -> Result<Vec<KStepModel>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let starts = exact_flow(model, eta0, k - 1)?;
    starts
        .into_iter()
        .enumerate()
        .map(|(r, start)| KStepModel::assemble(k, model, model, start, KStepTarget::Offset(r)))
        .collect()
}

/// Smallest eigenvalue of `S_k - A_k' S_k A_k`.
pub fn stability_gap(powers: &PropagatorPowers) -> f64 {
    let pushed = powers.a_k.transpose() * &powers.s_k * &powers.a_k;
    linalg::min_eigenvalue(&(&powers.s_k - pushed))
}

/// Smallest `k <= k_max` with `A_k' S_k A_k < S_k`.
pub fn min_stable_k(model: &GaussianModel, k_max: usize) -> Result<usize> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let mut gaps = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let gap = stability_gap(&propagator_powers(model, k)?);
        if gap > linalg::PD_TOL {
            return Ok(k);
        }
        gaps.push(gap);
    }
    Err(Error::StableKNotFound {
        k_max,
        min_eigenvalues: gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::updated_flow;
    use crate::{Matrix, Vector};

    fn max_gap(a: &GaussianMeasure, b: &GaussianMeasure) -> f64 {
        (&a.mean - &b.mean).amax().max(linalg::max_abs_diff(&a.cov, &b.cov))
    }

    fn model_2d() -> GaussianModel {
        GaussianModel::new(
            Matrix::from_row_slice(2, 2, &[1.3, 0.4, -0.2, 1.1]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.6]),
            Matrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 1.5]),
        )
        .unwrap()
    }

    #[test]
    fn k_one_recovers_base() {
        let m = GaussianModel::scalar(0.8, 1.2, 0.7).unwrap();
        let eta0 = GaussianMeasure::scalar(1.0, 2.0).unwrap();
        let ks = build_k_step(&m, 1, &eta0).unwrap();
        assert!(linalg::max_abs_diff(ks.grouped.a(), m.a()) < 1e-15);
        assert!(linalg::max_abs_diff(ks.grouped.b(), m.b()) < 1e-15);
        assert!(linalg::max_abs_diff(ks.grouped.s(), m.s()) < 1e-15);
        assert_eq!(ks.normalized_potential(&[0.0]), 1.0);
        assert!(ks.normalized_potential(&[3.0]) < 1.0);
    }

    #[test]
    fn predicted_flow_visits_every_kth_measure() {
        let m = model_2d();
        let eta0 = GaussianMeasure::new(Vector::from_vec(vec![2.0, -1.0]), Matrix::identity(2, 2) * 0.5).unwrap();
        for k in 1..=4 {
            let ks = build_k_step(&m, k, &eta0).unwrap();
            let got = ks.exact_flow(15).unwrap();
            let want = ks.target_flow(&eta0, 15).unwrap();
            for (g, w) in got.iter().zip(&want) {
                assert!(max_gap(g, w) < 1e-10, "k={k}: {}", max_gap(g, w));
            }
        }
    }

    #[test]
    fn updated_flow_visits_every_kth_updated_measure() {
        let m = model_2d();
        let eta0 = GaussianMeasure::new(Vector::from_vec(vec![-1.0, 3.0]), Matrix::identity(2, 2)).unwrap();
        let updated = updated_flow(&m, &eta0, 45).unwrap();
        for k in 1..=3 {
            let ks = build_updated_k_step(&m, k, &eta0).unwrap();
            for (n, g) in ks.exact_flow(15).unwrap().iter().enumerate() {
                assert!(max_gap(g, &updated[n * k]) < 1e-10);
            }
        }
    }

    #[test]
    fn offset_systems_cover_all_times() {
        let m = GaussianModel::scalar(1.5, 1.0, 1.0).unwrap();
        let eta0 = GaussianMeasure::scalar(0.5, 1.0).unwrap();
        let systems = build_offset_systems(&m, 3, &eta0).unwrap();
        let base = exact_flow(&m, &eta0, 32).unwrap();
        for (r, sys) in systems.iter().enumerate() {
            for (n, g) in sys.exact_flow(10).unwrap().iter().enumerate() {
                assert!(max_gap(g, &base[3 * n + r]) < 1e-10);
            }
        }
    }

    #[test]
    fn min_stable_k_examples() {
        assert_eq!(min_stable_k(&GaussianModel::scalar(0.5, 1.0, 1.0).unwrap(), 10).unwrap(), 1);
        assert_eq!(min_stable_k(&GaussianModel::scalar(0.0, 1.0, 1.0).unwrap(), 10).unwrap(), 1);
        // A_2 = 1.5 * 1.5 / 2 = 1.125, A_3 = 1.125 * 1.5 / (1 + 2.125) = 0.54.
        let unstable = GaussianModel::scalar(1.5, 1.0, 1.0).unwrap();
        assert_eq!(min_stable_k(&unstable, 10).unwrap(), 3);
        match min_stable_k(&unstable, 2).unwrap_err() {
            Error::StableKNotFound { k_max, min_eigenvalues } => {
                assert_eq!(k_max, 2);
                assert_eq!(min_eigenvalues.len(), 2);
                assert!(min_eigenvalues.iter().all(|&g| g <= 0.0));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn pushed_form_decays_in_k() {
        for m in [GaussianModel::scalar(1.5, 1.0, 1.0).unwrap(), model_2d()] {
            let eigs: Vec<(f64, f64)> = (1..=60)
                .map(|k| {
                    let p = propagator_powers(&m, k).unwrap();
                    let pushed = p.a_k.transpose() * &p.s_k * &p.a_k;
                    (linalg::min_eigenvalue(&pushed), linalg::max_eigenvalue(&pushed))
                })
                .collect();
            for w in eigs[5..].windows(2) {
                assert!(w[1].0 <= w[0].0 + 1e-15 && w[1].1 <= w[0].1 + 1e-15);
            }
            assert!(eigs.last().unwrap().1 < 1e-12);
        }
    }

    #[test]
    fn zero_drift_k_step() {
        let m = GaussianModel::new(Matrix::zeros(2, 2), Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
        let ks = build_k_step(&m, 4, &GaussianMeasure::new(Vector::zeros(2), Matrix::identity(2, 2)).unwrap()).unwrap();
        assert_eq!(ks.powers.a_k, Matrix::zeros(2, 2));
        assert!(linalg::max_abs_diff(&ks.powers.s_k, m.s()) < 1e-15);
    }
}
