//! Fixed-population walker approximation of a Feynman-Kac flow.
//!
//! Each step has a selection phase, where walker `i` survives with
//! probability `eps * G_n(x_i)` and is otherwise replaced by walker `j` drawn
//! with probability proportional to `G_n(x_j)`, followed by a mutation phase
//! through `P_{n+1}`. The occupation measure of the `N` walkers approximates
//! `eta_n`.
//!
//! Potentials are handled in log space: the models expose `log G_n`, and
//! weights are normalized by the ensemble maximum before use.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::exec::Backend;
use crate::gaussian::{GaussianMeasure, GaussianModel};
use crate::linalg;
use crate::rng::{self, Domain, WalkerRng, WALKERS_PER_STREAM};
use crate::stats;
use crate::{Error, Result};

/// A time-inhomogeneous Feynman-Kac model `(G_n, P_n, eta_0)` that the
/// engine can simulate.
pub trait FeynmanKacModel: Sync {
    fn dim(&self) -> usize;

    /// `log G_n(x)`; `-inf` means the walker is killed with certainty.
    fn log_potential(&self, step: usize, x: &[f64]) -> f64;

    /// `log sup G_n`, or `+inf` when no bound is declared.
    fn log_potential_bound(&self) -> f64 {
        f64::INFINITY
    }

    fn sample_initial(&self, rng: &mut WalkerRng, out: &mut [f64]);

    /// Draws from `P_{step+1}(x, .)`.
    fn mutate(&self, step: usize, x: &[f64], rng: &mut WalkerRng, out: &mut [f64]);

    /// Time step of the continuous model being discretized, if any.
    fn time_step(&self) -> Option<f64> {
        None
    }
}

/// Gaussian sampler `N(mean, L L')` over flat slices.
#[derive(Debug, Clone)]
pub(crate) struct GaussianSampler {
    dim: usize,
    mean: Vec<f64>,
    /// Row-major square root of the covariance.
    root: Vec<f64>,
}

impl GaussianSampler {
    pub(crate) fn new(measure: &GaussianMeasure) -> Result<Self> {
        let root = linalg::sym_sqrt(&measure.cov)?;
        Ok(Self {
            dim: measure.dim(),
            mean: measure.mean.iter().copied().collect(),
            root: linalg::to_row_major(&root),
        })
    }

    pub(crate) fn sample(&self, rng: &mut WalkerRng, out: &mut [f64]) {
        sample_affine(self.dim, &self.root, rng, out, |i| self.mean[i]);
    }
}

/// Writes `shift(i) + sum_j root[i][j] z_j` with `z` standard normal.
#[inline]
fn sample_affine(dim: usize, root: &[f64], rng: &mut WalkerRng, out: &mut [f64], shift: impl Fn(usize) -> f64) {
    if dim == 1 {
        let z: f64 = rng.sample(StandardNormal);
        out[0] = shift(0) + root[0] * z;
        return;
    }
    let mut z = [0.0; 8];
    let mut heap;
    let z: &mut [f64] = if dim <= 8 {
        &mut z[..dim]
    } else {
        heap = vec![0.0; dim];
        &mut heap
    };
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for (i, o) in out.iter_mut().enumerate() {
        let row = &root[i * dim..(i + 1) * dim];
        *o = shift(i) + row.iter().zip(z.iter()).map(|(r, v)| r * v).sum::<f64>();
    }
}

#[inline]
pub(crate) fn matvec(dim: usize, m: &[f64], x: &[f64], i: usize) -> f64 {
    m[i * dim..(i + 1) * dim].iter().zip(x).map(|(a, b)| a * b).sum()
}

#[inline]
pub(crate) fn half_quad(dim: usize, s: &[f64], x: &[f64]) -> f64 {
    if dim == 1 {
        return 0.5 * s[0] * x[0] * x[0];
    }
    0.5 * (0..dim).map(|i| x[i] * matvec(dim, s, x, i)).sum::<f64>()
}

/// The time-homogeneous model `G(x) = exp(-x'Sx/2)`, `P(x, .) = N(Ax, B)`,
/// `eta_0` Gaussian.
#[derive(Debug, Clone)]
pub struct GaussianFk {
    model: GaussianModel,
    eta0: GaussianMeasure,
    dim: usize,
    a: Vec<f64>,
    s: Vec<f64>,
    b_root: Vec<f64>,
    initial: GaussianSampler,
}

impl GaussianFk {
    pub fn new(model: GaussianModel, eta0: GaussianMeasure) -> Result<Self> {
        if model.dim() != eta0.dim() {
            return Err(Error::InvalidArgument(format!(
                "initial measure has dimension {} but the model has dimension {}",
                eta0.dim(),
                model.dim()
            )));
        }
        Ok(Self {
            dim: model.dim(),
            a: linalg::to_row_major(model.a()),
            s: linalg::to_row_major(model.s()),
            b_root: linalg::to_row_major(&linalg::cholesky(model.b(), "mutation covariance")?),
            initial: GaussianSampler::new(&eta0)?,
            model,
            eta0,
        })
    }

    pub fn model(&self) -> &GaussianModel {
        &self.model
    }

    pub fn initial(&self) -> &GaussianMeasure {
        &self.eta0
    }
}

impl FeynmanKacModel for GaussianFk {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_potential(&self, _step: usize, x: &[f64]) -> f64 {
        -half_quad(self.dim, &self.s, x)
    }

    fn log_potential_bound(&self) -> f64 {
        0.0
    }

    fn sample_initial(&self, rng: &mut WalkerRng, out: &mut [f64]) {
        self.initial.sample(rng, out);
    }

    fn mutate(&self, _step: usize, x: &[f64], rng: &mut WalkerRng, out: &mut [f64]) {
        let d = self.dim;
        sample_affine(d, &self.b_root, rng, out, |i| matvec(d, &self.a, x, i));
    }

    fn time_step(&self) -> Option<f64> {
        self.model.time_step()
    }
}

/// How the survival probability `eps * G_n(x_i)` is tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// `eps = 0`: every walker is resampled (multinomial reconfiguration).
    #[default]
    Proportional,
    /// `eps = 1`, for potentials bounded by one (geometric killing clock).
    Unit,
    /// `eps = 1 / max_i G_n(x_i)`; the fittest walker always survives.
    EssentialSup,
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionPolicy::Proportional => "proportional",
            SelectionPolicy::Unit => "unit",
            SelectionPolicy::EssentialSup => "essential_sup",
        })
    }
}

/// `N` walkers in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerEnsemble {
    pub step: usize,
    pub dim: usize,
    pub positions: Vec<f64>,
    pub seed: u64,
}

impl WalkerEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn walker(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn walkers(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks(self.dim)
    }

    /// Empirical mean of the occupation measure.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for w in self.walkers() {
            for (acc, v) in m.iter_mut().zip(w) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// `N` independent draws from `eta_0`, using the walker streams of step 0.
pub fn init_ensemble<M: FeynmanKacModel + ?Sized>(model: &M, n_walkers: usize, seed: u64, backend: Backend) -> Result<WalkerEnsemble> {
    if n_walkers < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 walkers, got {n_walkers}")));
    }
    let dim = model.dim();
    let mut positions = vec![0.0; n_walkers * dim];
    backend.for_each_block(&mut positions, dim, WALKERS_PER_STREAM, |block, _, out| {
        let mut rng = rng::substream(seed, Domain::Walker, 0, block as u64);
        for x in out.chunks_mut(dim) {
            model.sample_initial(&mut rng, x);
        }
    });
    Ok(WalkerEnsemble {
        step: 0,
        dim,
        positions,
        seed,
    })
}

/// Normalized selection weights of an ensemble at its current step.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub log_potential: Vec<f64>,
    pub log_max: f64,
    /// `G_n(x_i) / max_j G_n(x_j)`.
    pub relative: Vec<f64>,
    /// Running sums of `relative`.
    pub cumulative: Vec<f64>,
}

impl Weights {
    pub fn total(&self) -> f64 {
        *self.cumulative.last().expect("non-empty ensemble")
    }

    /// `log eta_n^N(G_n)`.
    pub fn log_mean_potential(&self) -> f64 {
        self.log_max + (self.total() / self.relative.len() as f64).ln()
    }

    /// `psi_{G_n}(eta_n^N)(f)`.
    pub fn updated_expectation(&self, ensemble: &WalkerEnsemble, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        let acc: f64 = ensemble.walkers().zip(&self.relative).map(|(x, w)| w * f(x)).sum();
        acc / self.total()
    }
}

pub fn weigh<M: FeynmanKacModel + ?Sized>(model: &M, ensemble: &WalkerEnsemble, backend: Backend) -> Result<Weights> {
    let step = ensemble.step;
    let log_potential = backend.map(ensemble.len(), |i| model.log_potential(step, ensemble.walker(i)));
    let log_max = log_potential.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !log_max.is_finite() {
        if log_max == f64::INFINITY || log_potential.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric {
                context: "potential evaluation",
                detail: format!("invalid log-potential at step {step}"),
            });
        }
        return Err(Error::Extinction { step });
    }
    let relative: Vec<f64> = log_potential.iter().map(|&l| (l - log_max).exp()).collect();
    let mut cumulative = Vec::with_capacity(relative.len());
    let mut acc = 0.0;
    for w in &relative {
        acc += w;
        cumulative.push(acc);
    }
    Ok(Weights {
        log_potential,
        log_max,
        relative,
        cumulative,
    })
}

/// Draws the parent index of every walker. Each walker consumes exactly two
/// uniforms from its block's selection stream at `step`.
pub fn select_indices(
    weights: &Weights,
    policy: SelectionPolicy,
    log_bound: f64,
    seed: u64,
    step: usize,
    backend: Backend,
) -> Result<Vec<usize>> {
    if policy == SelectionPolicy::Unit && !(log_bound <= 1e-12) {
        return Err(Error::InvalidArgument(
            "the unit selection policy requires potentials bounded by 1".into(),
        ));
    }
    let n = weights.relative.len();
    let total = weights.total();
    Ok(backend.map_blocks(n, WALKERS_PER_STREAM, |block, range| {
        let mut rng = rng::substream(seed, Domain::Selection, step as u64, block as u64);
        range
            .map(|i| {
                let keep: f64 = rng.random();
                let pick: f64 = rng.random();
                let survival = match policy {
                    SelectionPolicy::Proportional => 0.0,
                    SelectionPolicy::Unit => weights.log_potential[i].exp(),
                    SelectionPolicy::EssentialSup => weights.relative[i],
                };
                if keep < survival {
                    return i;
                }
                let target = pick * total;
                weights.cumulative.partition_point(|&c| c <= target).min(n - 1)
            })
            .collect()
    }))
}

pub fn resample(ensemble: &WalkerEnsemble, parents: &[usize], backend: Backend) -> WalkerEnsemble {
    let dim = ensemble.dim;
    let mut positions = vec![0.0; ensemble.positions.len()];
    backend.for_each_chunk(&mut positions, dim, |i, out| out.copy_from_slice(ensemble.walker(parents[i])));
    WalkerEnsemble {
        positions,
        ..ensemble.clone()
    }
}

/// Selection transition at the ensemble's current step.
pub fn selection_step<M: FeynmanKacModel + ?Sized>(
    model: &M,
    ensemble: &WalkerEnsemble,
    policy: SelectionPolicy,
    backend: Backend,
) -> Result<WalkerEnsemble> {
    let weights = weigh(model, ensemble, backend)?;
    let parents = select_indices(&weights, policy, model.log_potential_bound(), ensemble.seed, ensemble.step, backend)?;
    Ok(resample(ensemble, &parents, backend))
}

/// Moves every walker through `P_{n+1}` using the walker streams of step
/// `n + 1`.
pub fn mutation_step<M: FeynmanKacModel + ?Sized>(model: &M, ensemble: &WalkerEnsemble, backend: Backend) -> Result<WalkerEnsemble> {
    let dim = ensemble.dim;
    let step = ensemble.step;
    let mut positions = vec![0.0; ensemble.positions.len()];
    backend.for_each_block(&mut positions, dim, WALKERS_PER_STREAM, |block, first, out| {
        let mut rng = rng::substream(ensemble.seed, Domain::Walker, step as u64 + 1, block as u64);
        for (j, y) in out.chunks_mut(dim).enumerate() {
            model.mutate(step, ensemble.walker(first + j), &mut rng, y);
        }
    });
    if let Some(pos) = positions.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            step: step + 1,
            walker: pos / dim,
        });
    }
    Ok(WalkerEnsemble {
        step: step + 1,
        dim,
        positions,
        seed: ensemble.seed,
    })
}

type TestFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A named test function `f`.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    f: TestFn,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable").field("name", &self.name).finish()
    }
}

impl Observable {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// `x -> x_i`, named `x{i}`.
    pub fn coordinate(i: usize) -> Self {
        Self::new(format!("x{i}"), move |x: &[f64]| x[i])
    }

    /// `x -> x_i^2`, named `x{i}^2`.
    pub fn square(i: usize) -> Self {
        Self::new(format!("x{i}^2"), move |x: &[f64]| x[i] * x[i])
    }

    /// Parses the names produced by [`Observable::coordinate`] and
    /// [`Observable::square`].
    pub fn parse(name: &str, dim: usize) -> Option<Self> {
        let rest = name.strip_prefix('x')?;
        let (idx, squared) = match rest.strip_suffix("^2") {
            Some(r) => (r, true),
            None => (rest, false),
        };
        let i: usize = idx.parse().ok()?;
        (i < dim).then(|| if squared { Self::square(i) } else { Self::coordinate(i) })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub n_walkers: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub policy: SelectionPolicy,
}

/// Estimators recorded at step `n`, before selection.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Mean of `eta_n^N`.
    pub mean: Vec<f64>,
    /// `log eta_n^N(G_n)`.
    pub log_eta_g: f64,
    /// `psi_{G_n}(eta_n^N)(f)` for each registered observable.
    pub updated: Vec<f64>,
}

impl StepRecord {
    /// `eta_n^N(G_n)`, the per-step estimate of the leading eigenvalue.
    pub fn eta_g(&self) -> f64 {
        self.log_eta_g.exp()
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorSeries {
    pub config: RunConfig,
    pub dim: usize,
    pub time_step: Option<f64>,
    pub observables: Vec<String>,
    pub records: Vec<StepRecord>,
    /// Wall-clock time spent producing each record.
    pub timings: Vec<Duration>,
}

impl EstimatorSeries {
    /// Equality of everything except wall-clock timings.
    pub fn same_estimates(&self, other: &Self) -> bool {
        self.config == other.config
            && self.dim == other.dim
            && self.observables == other.observables
            && self.records == other.records
    }
}

fn record<M: FeynmanKacModel + ?Sized>(ensemble: &WalkerEnsemble, weights: &Weights, observables: &[Observable]) -> StepRecord {
    let _ = std::marker::PhantomData::<&M>;
    StepRecord {
        step: ensemble.step,
        mean: ensemble.mean(),
        log_eta_g: weights.log_mean_potential(),
        updated: observables
            .iter()
            .map(|o| weights.updated_expectation(ensemble, &|x| o.eval(x)))
            .collect(),
    }
}

/// Runs `n_steps` selection/mutation steps and records estimators at every
/// step `0..=n_steps`.
pub fn run<M: FeynmanKacModel + ?Sized>(
    model: &M,
    config: RunConfig,
    observables: &[Observable],
    backend: Backend,
) -> Result<EstimatorSeries> {
    run_with(model, config, observables, backend, |_| {})
}

/// [`run`] with a callback receiving every ensemble before its selection.
pub fn run_with<M: FeynmanKacModel + ?Sized>(
    model: &M,
    config: RunConfig,
    observables: &[Observable],
    backend: Backend,
    mut inspect: impl FnMut(&WalkerEnsemble),
) -> Result<EstimatorSeries> {
    let mut clock = Instant::now();
    let mut ensemble = init_ensemble(model, config.n_walkers, config.seed, backend)?;
    let mut records = Vec::with_capacity(config.n_steps + 1);
    let mut timings = Vec::with_capacity(config.n_steps + 1);
    loop {
        inspect(&ensemble);
        let weights = weigh(model, &ensemble, backend)?;
        records.push(record::<M>(&ensemble, &weights, observables));
        if ensemble.step == config.n_steps {
            timings.push(clock.elapsed());
            break;
        }
        let parents = select_indices(
            &weights,
            config.policy,
            model.log_potential_bound(),
            config.seed,
            ensemble.step,
            backend,
        )?;
        let selected = resample(&ensemble, &parents, backend);
        ensemble = mutation_step(model, &selected, backend)?;
        timings.push(clock.elapsed());
        clock = Instant::now();
    }
    Ok(EstimatorSeries {
        config,
        dim: model.dim(),
        time_step: model.time_step(),
        observables: observables.iter().map(|o| o.name.clone()).collect(),
        records,
        timings,
    })
}

/// Where averaging of `eta_n^N(G)` starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurnIn {
    /// `n >= a + b ln N`.
    Rule { a: f64, b: f64 },
    Explicit(usize),
}

impl Default for BurnIn {
    fn default() -> Self {
        BurnIn::Rule { a: 10.0, b: 2.0 }
    }
}

impl BurnIn {
    pub fn steps(self, n_walkers: usize) -> usize {
        match self {
            BurnIn::Rule { a, b } => (a + b * (n_walkers as f64).ln()).ceil().max(0.0) as usize,
            BurnIn::Explicit(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyEstimate {
    /// Time average of `eta_n^N(G)` after burn-in: estimates `E0`.
    pub e0: f64,
    /// Standard error treating the samples as independent (autocorrelation
    /// is ignored, so this is optimistic).
    pub std_error: f64,
    pub burn_in: usize,
    pub samples: usize,
    /// `-log(E0) / delta` when the model carries a time step.
    pub energy: Option<f64>,
    pub energy_std_error: Option<f64>,
}

pub fn energy_estimate(series: &EstimatorSeries, burn_in: BurnIn) -> Result<EnergyEstimate> {
    let start = burn_in.steps(series.config.n_walkers);
    let len = series.records.len();
    if start >= len {
        return Err(Error::BurnInTooLong { burn_in: start, len });
    }
    let samples: Vec<f64> = series.records[start..].iter().map(StepRecord::eta_g).collect();
    let e0 = stats::mean(&samples);
    let std_error = stats::std_error(&samples);
    let energy = series.time_step.map(|dt| -e0.ln() / dt);
    let energy_std_error = series.time_step.map(|dt| std_error / (e0 * dt));
    Ok(EnergyEstimate {
        e0,
        std_error,
        burn_in: start,
        samples: samples.len(),
        energy,
        energy_std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vector;

    fn scalar_fk(a: f64, b: f64, s: f64, m0: f64, v0: f64) -> GaussianFk {
        GaussianFk::new(GaussianModel::scalar(a, b, s).unwrap(), GaussianMeasure::scalar(m0, v0).unwrap()).unwrap()
    }

    /// Potential scaled by a constant; everything else delegated.
    struct Scaled<'a> {
        inner: &'a GaussianFk,
        log_c: f64,
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

    #[test]
    fn init_point_mass_and_determinism() {
        let model = GaussianFk::new(
            GaussianModel::scalar(0.5, 1.0, 1.0).unwrap(),
            GaussianMeasure::point_mass(Vector::from_element(1, 3.25)),
        )
        .unwrap();
        let ens = init_ensemble(&model, 10, 1, Backend::Parallel).unwrap();
        assert!(ens.positions.iter().all(|&x| x == 3.25));

        let model = scalar_fk(0.5, 1.0, 1.0, 0.0, 1.0);
        let a = init_ensemble(&model, 100, 9, Backend::Parallel).unwrap();
        let b = init_ensemble(&model, 100, 9, Backend::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(init_ensemble(&model, 1, 9, Backend::Sequential).is_err());
    }

    #[test]
    fn init_mean_within_mc_bound() {
        let (m0, v0, n) = (1.5, 4.0, 400);
        let model = scalar_fk(0.5, 1.0, 1.0, m0, v0);
        let bound = 5.0 * v0.sqrt() / (n as f64).sqrt();
        for seed in 0..100 {
            let ens = init_ensemble(&model, n, seed, Backend::Parallel).unwrap();
            assert!((ens.mean()[0] - m0).abs() < bound, "seed {seed}");
        }
    }

    #[test]
    fn equal_weights_give_uniform_parents() {
        let weights = Weights {
            log_potential: vec![-1.0; 4],
            log_max: -1.0,
            relative: vec![1.0; 4],
            cumulative: vec![1.0, 2.0, 3.0, 4.0],
        };
        let mut counts = [0usize; 4];
        for step in 0..5000 {
            for p in select_indices(&weights, SelectionPolicy::Proportional, 0.0, 3, step, Backend::Sequential).unwrap() {
                counts[p] += 1;
            }
        }
        // 20000 draws, 5000 expected per cell, sd ~ 61.
        for c in counts {
            assert!((c as f64 - 5000.0).abs() < 300.0, "{counts:?}");
        }
    }

    #[test]
    fn unit_policy_with_unit_potential_is_identity() {
        let weights = Weights {
            log_potential: vec![0.0; 6],
            log_max: 0.0,
            relative: vec![1.0; 6],
            cumulative: (1..=6).map(|v| v as f64).collect(),
        };
        let parents = select_indices(&weights, SelectionPolicy::Unit, 0.0, 11, 0, Backend::Sequential).unwrap();
        assert_eq!(parents, (0..6).collect::<Vec<_>>());
        assert!(select_indices(&weights, SelectionPolicy::Unit, 1.0, 11, 0, Backend::Sequential).is_err());
    }

    #[test]
    fn essential_sup_keeps_fittest() {
        let model = scalar_fk(0.9, 1.0, 1.0, 0.0, 4.0);
        for seed in 0..200 {
            let ens = init_ensemble(&model, 16, seed, Backend::Sequential).unwrap();
            let w = weigh(&model, &ens, Backend::Sequential).unwrap();
            let best = (0..16).max_by(|&i, &j| w.relative[i].total_cmp(&w.relative[j])).unwrap();
            let parents = select_indices(&w, SelectionPolicy::EssentialSup, 0.0, seed, 0, Backend::Sequential).unwrap();
            assert_eq!(parents[best], best);
        }
    }

    #[test]
    fn scale_invariance_of_selection() {
        let model = scalar_fk(0.9, 1.0, 1.0, 0.5, 2.0);
        let ens = init_ensemble(&model, 64, 5, Backend::Sequential).unwrap();
        let base = weigh(&model, &ens, Backend::Sequential).unwrap();
        for log_c in [2f64.ln(), -3.0f64.ln() * 5.0, 17.3, -400.0] {
            let scaled = Scaled { inner: &model, log_c };
            let w = weigh(&scaled, &ens, Backend::Sequential).unwrap();
            for policy in [SelectionPolicy::Proportional, SelectionPolicy::EssentialSup] {
                for step in 0..50 {
                    let a = select_indices(&base, policy, 0.0, 99, step, Backend::Sequential).unwrap();
                    let b = select_indices(&w, policy, f64::INFINITY, 99, step, Backend::Sequential).unwrap();
                    assert_eq!(a, b);
                }
            }
            let f = |x: &[f64]| x[0].sin();
            assert!((base.updated_expectation(&ens, &f) - w.updated_expectation(&ens, &f)).abs() < 1e-14);
        }
    }

    #[test]
    fn extinction_is_an_error() {
        struct Dead;
        impl FeynmanKacModel for Dead {
            fn dim(&self) -> usize {
                1
            }
            fn log_potential(&self, _: usize, _: &[f64]) -> f64 {
                f64::NEG_INFINITY
            }
            fn sample_initial(&self, _: &mut WalkerRng, out: &mut [f64]) {
                out[0] = 0.0;
            }
            fn mutate(&self, _: usize, x: &[f64], _: &mut WalkerRng, out: &mut [f64]) {
                out[0] = x[0];
            }
        }
        let cfg = RunConfig {
            n_walkers: 4,
            n_steps: 3,
            seed: 0,
            policy: SelectionPolicy::Proportional,
        };
        assert_eq!(run(&Dead, cfg, &[], Backend::Sequential).unwrap_err(), Error::Extinction { step: 0 });
    }

    #[test]
    fn nonfinite_mutation_is_reported() {
        struct Blowup;
        impl FeynmanKacModel for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn log_potential(&self, _: usize, _: &[f64]) -> f64 {
                0.0
            }
            fn sample_initial(&self, _: &mut WalkerRng, out: &mut [f64]) {
                out[0] = 1.0;
            }
            fn mutate(&self, _: usize, _: &[f64], _: &mut WalkerRng, out: &mut [f64]) {
                out[0] = f64::NAN;
            }
        }
        let ens = init_ensemble(&Blowup, 3, 0, Backend::Sequential).unwrap();
        assert_eq!(
            mutation_step(&Blowup, &ens, Backend::Sequential).unwrap_err(),
            Error::NonFinite { step: 1, walker: 0 }
        );
    }

    #[test]
    fn mutation_is_linear_in_mean() {
        let model = scalar_fk(0.7, 0.25, 1.0, 0.0, 1.0);
        let mut ens = init_ensemble(&model, 20_000, 2, Backend::Parallel).unwrap();
        ens.positions.iter_mut().for_each(|x| *x += 3.0);
        let before = ens.mean()[0];
        let after = mutation_step(&model, &ens, Backend::Parallel).unwrap();
        // sd of the moved mean: sqrt(0.25 / N) plus negligible spread.
        assert!((after.mean()[0] - 0.7 * before).abs() < 5.0 * (0.25f64 / 20_000.0).sqrt());
        assert_eq!(after.step, 1);
        assert_eq!(after.len(), 20_000);
    }

    #[test]
    fn near_identity_kernel_barely_moves() {
        let model = scalar_fk(1.0, 1e-9, 1.0, 0.0, 1.0);
        let ens = init_ensemble(&model, 100, 4, Backend::Sequential).unwrap();
        let moved = mutation_step(&model, &ens, Backend::Sequential).unwrap();
        for (x, y) in ens.positions.iter().zip(&moved.positions) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_steps_records_initial_only() {
        let model = scalar_fk(0.5, 1.0, 1.0, 0.0, 1.0);
        let cfg = RunConfig {
            n_walkers: 50,
            n_steps: 0,
            seed: 1,
            policy: SelectionPolicy::Proportional,
        };
        let series = run(&model, cfg, &[Observable::coordinate(0)], Backend::Sequential).unwrap();
        assert_eq!(series.records.len(), 1);
        assert_eq!(series.records[0].step, 0);
        assert_eq!(series.timings.len(), 1);
    }

    #[test]
    fn run_is_thread_count_independent() {
        let model = GaussianFk::new(
            GaussianModel::new(
                crate::Matrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.4]),
                crate::Matrix::identity(2, 2),
                crate::Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]),
            )
            .unwrap(),
            GaussianMeasure::new(Vector::from_vec(vec![1.0, -1.0]), crate::Matrix::identity(2, 2)).unwrap(),
        )
        .unwrap();
        let obs = [Observable::coordinate(1), Observable::square(0)];
        for policy in [SelectionPolicy::Proportional, SelectionPolicy::Unit, SelectionPolicy::EssentialSup] {
            let cfg = RunConfig {
                n_walkers: 300,
                n_steps: 20,
                seed: 77,
                policy,
            };
            let seq = run(&model, cfg, &obs, Backend::Sequential).unwrap();
            let par = run(&model, cfg, &obs, Backend::Parallel).unwrap();
            assert!(seq.same_estimates(&par));
            assert!(seq.records.iter().all(|r| r.eta_g() > 0.0 && r.eta_g() <= 1.0));
        }
    }

    #[test]
    fn energy_estimate_of_constant_series() {
        let cfg = RunConfig {
            n_walkers: 10,
            n_steps: 9,
            seed: 0,
            policy: SelectionPolicy::Proportional,
        };
        let series = EstimatorSeries {
            config: cfg,
            dim: 1,
            time_step: Some(0.5),
            observables: vec![],
            records: (0..10)
                .map(|step| StepRecord {
                    step,
                    mean: vec![0.0],
                    log_eta_g: 0.25f64.ln(),
                    updated: vec![],
                })
                .collect(),
            timings: vec![],
        };
        let est = energy_estimate(&series, BurnIn::Explicit(3)).unwrap();
        assert!((est.e0 - 0.25).abs() < 1e-15);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.samples, 7);
        assert!((est.energy.unwrap() - 4f64.ln() / 0.5).abs() < 1e-12);
        assert_eq!(
            energy_estimate(&series, BurnIn::Explicit(10)).unwrap_err(),
            Error::BurnInTooLong { burn_in: 10, len: 10 }
        );
        // a + b ln N = 10 + 2 ln 10 = 14.6 -> 15
        assert_eq!(BurnIn::default().steps(10), 15);
    }

    #[test]
    fn observable_names_round_trip() {
        assert_eq!(Observable::parse("x0", 2).unwrap().name, "x0");
        assert_eq!(Observable::parse("x1^2", 2).unwrap().eval(&[0.0, 3.0]), 9.0);
        assert!(Observable::parse("x2", 2).is_none());
        assert!(Observable::parse("y0", 2).is_none());
    }
}
