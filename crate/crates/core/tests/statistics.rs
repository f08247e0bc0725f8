//! Statistical checks of walker estimates against exact Gaussian references.

use fkdmc::analysis::replicate;
use fkdmc::engine::{energy_estimate, run, BurnIn, GaussianFk, RunConfig, SelectionPolicy};
use fkdmc::exec::Backend;
use fkdmc::gaussian::{discretize_continuous, exact_flow, ground_state, Scheme};
use fkdmc::rng::derive_seed;
use fkdmc::{stats, GaussianMeasure, GaussianModel, Matrix};

/// Per-replicate time averages of `eta_n^N(G)` after burn-in.
fn replicated_e0(model: &GaussianModel, eta0: &GaussianMeasure, n_walkers: usize, n_steps: usize, reps: usize, seed: u64, policy: SelectionPolicy) -> Vec<f64> {
    let fk = GaussianFk::new(model.clone(), eta0.clone()).unwrap();
    replicate(reps, Backend::default(), |r| {
        let config = RunConfig {
            n_walkers,
            n_steps,
            seed: derive_seed(seed, r as u64),
            policy,
        };
        let series = run(&fk, config, &[], Backend::Sequential)?;
        Ok(energy_estimate(&series, BurnIn::Explicit(40))?.e0)
    })
    .unwrap()
}

fn assert_within(samples: &[f64], exact: f64, k: f64) {
    let (m, se) = (stats::mean(samples), stats::std_error(samples));
    assert!((m - exact).abs() <= k * se, "estimate {m} +- {se}, exact {exact}");
}

#[test]
fn ground_energy_for_contracting_kernel() {
    let model = GaussianModel::scalar(0.5, 1.0, 1.0).unwrap();
    let e0 = ground_state(&model, 1e-14, 100_000).unwrap().e0;
    let eta0 = GaussianMeasure::scalar(1.0, 1.0).unwrap();
    for policy in [SelectionPolicy::Proportional, SelectionPolicy::Unit, SelectionPolicy::EssentialSup] {
        let samples = replicated_e0(&model, &eta0, 10_000, 240, 12, 77, policy);
        assert_within(&samples, e0, 3.0);
    }
}

#[test]
fn memoryless_kernel_has_energy_one_over_root_two() {
    // A = 0: every step draws fresh N(0, 1) walkers, so eta_n(G) = E[exp(-X^2/2)] = 2^{-1/2}.
    let model = GaussianModel::scalar(0.0, 1.0, 1.0).unwrap();
    let eta0 = GaussianMeasure::scalar(3.0, 0.1).unwrap();
    let samples = replicated_e0(&model, &eta0, 5_000, 140, 12, 5, SelectionPolicy::Proportional);
    assert_within(&samples, 0.5f64.sqrt(), 3.0);
}

#[test]
fn walker_means_track_the_exact_flow() {
    let model = GaussianModel::new(
        Matrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.5]),
        Matrix::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.4]),
        Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.7]),
    )
    .unwrap();
    let eta0 = GaussianMeasure::new(fkdmc::Vector::from_vec(vec![3.0, -2.0]), Matrix::identity(2, 2)).unwrap();
    let exact = exact_flow(&model, &eta0, 15).unwrap();
    let fk = GaussianFk::new(model, eta0).unwrap();
    let finals = replicate(24, Backend::default(), |r| {
        let config = RunConfig {
            n_walkers: 4_000,
            n_steps: 15,
            seed: derive_seed(3, r as u64),
            policy: SelectionPolicy::Proportional,
        };
        let series = run(&fk, config, &fkdmc::analysis::coordinate_observables(2), Backend::Sequential)?;
        Ok(series.records[15].mean.clone())
    })
    .unwrap();
    for i in 0..2 {
        let samples: Vec<f64> = finals.iter().map(|m| m[i]).collect();
        assert_within(&samples, exact[15].mean[i], 4.0);
    }
}

/// Ground energy of `dX = cX dt + sqrt(2d) dW` killed at rate `f x^2 / 2`:
/// with `h = exp(-s x^2 / 2)`, `d s^2 - c s - f/2 = 0` and the energy is `d s`.
fn continuous_energy(c: f64, d: f64, f: f64) -> f64 {
    let s = (c + (c * c + 2.0 * d * f).sqrt()) / (2.0 * d);
    d * s
}

fn ou(delta: f64, scheme: Scheme) -> GaussianModel {
    let m = |v: f64| Matrix::from_element(1, 1, v);
    discretize_continuous(&m(-1.0), &m(0.5), &m(1.0), delta, scheme).unwrap()
}

#[test]
fn discretized_energy_converges_to_continuous_energy() {
    let exact = continuous_energy(-1.0, 0.5, 1.0);
    for scheme in [Scheme::Exact, Scheme::Euler] {
        let errors: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let model = ou(dt, scheme);
                (ground_state(&model, 1e-14, 1_000_000).unwrap().energy(dt) - exact).abs()
            })
            .collect();
        assert!(errors[2] < 0.01, "{scheme:?}: {errors:?}");
        // At least first-order convergence in the time step (the exact
        // transition gives second order).
        for w in errors.windows(2) {
            assert!(w[0] / w[1] > 1.8, "{scheme:?}: {errors:?}");
        }
    }
}

#[test]
fn walker_energy_for_discretized_ou_process() {
    for dt in [0.1, 0.05] {
        let model = ou(dt, Scheme::Exact);
        let gs = ground_state(&model, 1e-14, 1_000_000).unwrap();
        let eta0 = GaussianMeasure::scalar(0.0, 1.0).unwrap();
        let samples: Vec<f64> = replicated_e0(&model, &eta0, 5_000, 400, 12, 31, SelectionPolicy::Proportional)
            .into_iter()
            .map(|e| -e.ln() / dt)
            .collect();
        assert_within(&samples, gs.energy(dt), 3.0);
    }
}
