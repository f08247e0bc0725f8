//! Stability certificates, total-variation bounds, asymptotic variances and
//! the replicated Monte Carlo experiments (convergence, divergence, CLT).

use rand::Rng;
use serde::Serialize;

use crate::engine::{run, FeynmanKacModel, GaussianFk, Observable, RunConfig, SelectionPolicy};
use crate::exec::Backend;
use crate::gaussian::{closed_form_1d, exact_flow, ground_state, quadratic_push, GaussianMeasure, GaussianModel};
use crate::rng::{self, derive_seed, Domain};
use crate::{engine, linalg, stats, Error, Matrix, Result, Vector};

/// Tolerance used by both contraction tests.
pub const STABILITY_TOL: f64 = 1e-10;

/// Outcome of the stability analysis of a Gaussian model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub dim: usize,
    /// `A'SA < S`, decided by the eigenvalue gap.
    pub holds: bool,
    /// Spectral norm of `S^{1/2} A S^{-1/2}`.
    pub rho: f64,
    /// Smallest eigenvalue of `S - A'SA`.
    pub min_eig_gap: f64,
    /// Whether the spectral-norm test (`rho < 1`) reached the same verdict.
    pub tests_agree: bool,
    /// Largest feasible Lyapunov exponent, when the contraction holds.
    pub alpha_bar: Option<f64>,
    /// Smallest eigenvalues of the two feasibility matrices at `alpha_bar / 2`.
    pub certificate: Option<[f64; 2]>,
    /// Solution `H` of `H = A'(HB + I)^{-1} H A + S` (row-major), computed by
    /// the doubling algorithm.
    pub h: Option<Vec<f64>>,
    /// `sup_x P(G)(x) = det(I + BS)^{-1/2}`.
    pub chi: Option<f64>,
}

/// Both forms of the contraction test `A'SA < S`.
pub fn contraction_check(a: &Matrix, s: &Matrix) -> Result<StabilityReport> {
    if !linalg::is_square(a) || a.shape() != s.shape() {
        return Err(Error::InvalidArgument("A and S must be square of equal size".into()));
    }
    if !linalg::is_positive_definite(s) {
        return Err(Error::InvalidModel("S must be symmetric positive definite".into()));
    }
    let root = linalg::sym_sqrt(s)?;
    let inv_root = linalg::sym_inv_sqrt(s)?;
    let rho = linalg::spectral_norm(&(&root * a * &inv_root));
    let min_eig_gap = linalg::min_eigenvalue(&(s - a.transpose() * s * a));
    let by_gap = min_eig_gap > STABILITY_TOL;
    let by_norm = rho < 1.0 - STABILITY_TOL;
    Ok(StabilityReport {
        dim: a.nrows(),
        holds: by_gap,
        rho,
        min_eig_gap,
        tests_agree: by_gap == by_norm,
        alpha_bar: None,
        certificate: None,
        h: None,
        chi: None,
    })
}

/// Worst observed ratio `|m_n| / (rho^{n-k} |m_k|)` over `0 <= k < n <= horizon`
/// along the exact flow, in two norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanDecay {
    /// Spectral norm of `S^{1/2} A S^{-1/2}`.
    pub rho: f64,
    /// Ratio in the norm `|x|_S = |S^{1/2} x|`, where the contraction
    /// argument gives the bound `<= 1`.
    pub worst_weighted: f64,
    /// Same ratio in the Euclidean norm; can exceed 1 by up to
    /// `sqrt(cond(S))` when `S` is not a multiple of the identity.
    pub worst_euclidean: f64,
}

pub fn mean_decay(model: &GaussianModel, eta0: &GaussianMeasure, horizon: usize) -> Result<MeanDecay> {
    let report = contraction_check(model.a(), model.s())?;
    let root = linalg::sym_sqrt(model.s())?;
    let flow = exact_flow(model, eta0, horizon)?;
    let log_rho = report.rho.ln();
    let worst = |norms: &[f64]| -> f64 {
        let mut worst: f64 = 0.0;
        for n in 1..norms.len() {
            if norms[n] == 0.0 {
                continue;
            }
            for k in 0..n {
                // log(|m_n| / (rho^{n-k} |m_k|)); m_n != 0 forces m_k != 0 and rho > 0.
                let log_ratio = norms[n].ln() - (n - k) as f64 * log_rho - norms[k].ln();
                worst = worst.max(log_ratio.exp());
            }
        }
        worst
    };
    let weighted: Vec<f64> = flow.iter().map(|m| (&root * &m.mean).norm()).collect();
    let euclidean: Vec<f64> = flow.iter().map(|m| m.mean.norm()).collect();
    Ok(MeanDecay {
        rho: report.rho,
        worst_weighted: worst(&weighted),
        worst_euclidean: worst(&euclidean),
    })
}

/// Full report: contraction tests, Lyapunov exponent (when the contraction
/// holds), Riccati solution and `chi`.
pub fn stability(model: &GaussianModel) -> Result<StabilityReport> {
    let mut report = contraction_check(model.a(), model.s())?;
    if report.holds {
        let lyap = lyapunov_alpha(model, 1e-12)?;
        report.alpha_bar = Some(lyap.alpha_bar);
        report.certificate = Some(lyap.certificate);
    }
    report.h = riccati_doubling(model, 1e-13, 200).ok().map(|d| linalg::to_row_major(&d.h));
    report.chi = Some(quadratic_push(model, &(-model.s()))?.0);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovExponent {
    pub alpha_bar: f64,
    /// Smallest eigenvalues of `B^{-1} - aS` and `S - A'(I - aSB)^{-1}SA` at
    /// `a = alpha_bar / 2`.
    pub certificate: [f64; 2],
}

fn lyapunov_margins(model: &GaussianModel, alpha: f64, b_inv: &Matrix) -> Result<[f64; 2]> {
    let d = model.dim();
    let first = linalg::min_eigenvalue(&(b_inv - model.s() * alpha));
    if !(first > 0.0) {
        return Ok([first, f64::NEG_INFINITY]);
    }
    let m = Matrix::identity(d, d) - model.s() * model.b() * alpha;
    let inner = linalg::solve(&m, model.s(), "Lyapunov feasibility")?;
    let second = linalg::min_eigenvalue(&(model.s() - model.a().transpose() * inner * model.a()));
    Ok([first, second])
}

/// Largest `alpha` in `(0, 1 / (lambda_max(B) lambda_max(S)))` for which
/// `V(x) = exp(alpha x'Sx / 2)` is a Lyapunov function, by bisection.
pub fn lyapunov_alpha(model: &GaussianModel, tol: f64) -> Result<LyapunovExponent> {
    let b_inv = linalg::inverse(model.b(), "Lyapunov B^-1")?;
    let feasible = |alpha: f64| -> Result<bool> {
        let [a, b] = lyapunov_margins(model, alpha, &b_inv)?;
        Ok(a > 0.0 && b > 0.0)
    };
    let hi0 = 1.0 / (linalg::max_eigenvalue(model.b()) * linalg::max_eigenvalue(model.s()));
    let mut lo = hi0 * 1e-12;
    if !feasible(lo)? {
        return Err(Error::InvalidModel(
            "no feasible Lyapunov exponent: the contraction A'SA < S fails".into(),
        ));
    }
    let mut hi = hi0;
    while hi - lo > tol * hi0 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(LyapunovExponent {
        alpha_bar: lo,
        certificate: lyapunov_margins(model, lo / 2.0, &b_inv)?,
    })
}

/// Solutions of both Riccati equations by the structure-preserving doubling
/// algorithm, independent of the fixed-point iteration in
/// [`crate::gaussian::ground_state`].
#[derive(Debug, Clone, PartialEq)]
pub struct Doubling {
    /// `H = A'(HB + I)^{-1} H A + S`.
    pub h: Matrix,
    /// `P = A(I + PS)^{-1} P A' + B`.
    pub p: Matrix,
    pub iterations: usize,
}

pub fn riccati_doubling(model: &GaussianModel, tol: f64, max_iter: usize) -> Result<Doubling> {
    let d = model.dim();
    let id = Matrix::identity(d, d);
    let mut a = model.a().clone();
    let mut g = model.b().clone();
    let mut h = model.s().clone();
    for it in 1..=max_iter {
        let w = linalg::inverse(&(&id + &g * &h), "doubling (I + GH)^-1")?;
        let a_next = &a * &w * &a;
        let g_next = linalg::symmetrize(&(&g + &a * &w * &g * a.transpose()));
        let h_next = linalg::symmetrize(&(&h + a.transpose() * &h * &w * &a));
        let change = linalg::max_abs_diff(&h_next, &h).max(linalg::max_abs_diff(&g_next, &g));
        a = a_next;
        g = g_next;
        h = h_next;
        if !change.is_finite() {
            break;
        }
        if change < tol {
            return Ok(Doubling { h, p: g, iterations: it });
        }
    }
    Err(Error::NonConvergence {
        what: "Riccati doubling",
        iterations: max_iter,
        residual: f64::NAN,
    })
}

/// `KL(N(m1, S1) || N(m2, S2))`, computed from the eigenvalues `l` of
/// `S2^{-1/2} (S1 - S2) S2^{-1/2}` as `(sum(l - log1p(l)) + quad) / 2` so that
/// nearly equal measures do not cancel catastrophically.
pub fn gaussian_kl(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64> {
    let inv_root = linalg::sym_inv_sqrt(&q.cov).map_err(|_| Error::Numeric {
        context: "Gaussian relative entropy",
        detail: "degenerate covariance".into(),
    })?;
    let m = &inv_root * (&p.cov - &q.cov) * &inv_root;
    let spread: f64 = linalg::sym_eigenvalues(&m)
        .iter()
        .map(|&l| {
            if l <= -1.0 {
                f64::INFINITY
            } else {
                l - l.ln_1p()
            }
        })
        .sum();
    let diff = &inv_root * (&p.mean - &q.mean);
    Ok(0.5 * (spread + diff.norm_squared()))
}

/// Total variation `(1/2) int |p - q|` between two one-dimensional Gaussians
/// by composite Simpson quadrature over 24 standard deviations. The integrand
/// is written through `expm1` of `log q - log p`, with the exponent expanded
/// to avoid cancellation.
pub fn tv_1d_quadrature(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::InvalidArgument("quadrature TV requires one-dimensional measures".into()));
    }
    let (m1, v1, m2, v2) = (p.mean[0], p.cov[(0, 0)], q.mean[0], q.cov[(0, 0)]);
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::Numeric {
            context: "quadrature total variation",
            detail: "degenerate variance".into(),
        });
    }
    let sd = v1.max(v2).sqrt();
    let (lo, hi) = (m1.min(m2) - 12.0 * sd, m1.max(m2) + 12.0 * sd);
    const PANELS: usize = 20_000;
    let h = (hi - lo) / PANELS as f64;
    let dv = v2 - v1;
    let integrand = |x: f64| {
        let u = x - m1;
        let log_p = -0.5 * u * u / v1 - 0.5 * (2.0 * std::f64::consts::PI * v1).ln();
        // log q - log p
        let delta = 0.5 * (u * u * dv / (v1 * v2) + (m2 - m1) * (2.0 * x - m1 - m2) / v2) - 0.5 * (dv / v1).ln_1p();
        // p |e^delta - 1|, written as q (1 - e^-delta) when q > p so that
        // neither factor overflows when the measures are far apart.
        if delta > 0.0 {
            (log_p + delta).exp() * -(-delta).exp_m1()
        } else {
            log_p.exp() * -delta.exp_m1()
        }
    };
    let mut acc = integrand(lo) + integrand(hi);
    for i in 1..PANELS {
        acc += integrand(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(0.5 * acc * h / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvStep {
    pub step: usize,
    /// `KL(eta_n^1 || eta_n^2)` between the two exact flows.
    pub kl: f64,
    /// Pinsker bound `sqrt(KL / 2)` on the total variation.
    pub pinsker: f64,
    /// Total variation by quadrature (one-dimensional models only).
    pub tv: Option<f64>,
}

/// Stability in total variation of the exact flow with respect to its
/// initial condition, steps `0..=n`.
pub fn tv_stability_bound(model: &GaussianModel, nu1: &GaussianMeasure, nu2: &GaussianMeasure, n: usize) -> Result<Vec<TvStep>> {
    let f1 = exact_flow(model, nu1, n)?;
    let f2 = exact_flow(model, nu2, n)?;
    f1.iter()
        .zip(&f2)
        .enumerate()
        .map(|(step, (p, q))| {
            let kl = gaussian_kl(p, q)?;
            let tv = if model.dim() == 1 && p.cov[(0, 0)] > 0.0 && q.cov[(0, 0)] > 0.0 {
                Some(tv_1d_quadrature(p, q)?)
            } else {
                None
            };
            Ok(TvStep {
                step,
                kl,
                pinsker: (kl / 2.0).sqrt(),
                tv,
            })
        })
        .collect()
}

/// `exp(slope)` of a least-squares fit of `ln(values)` against the index,
/// ignoring zero entries.
pub fn geometric_rate(values: &[f64]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(i, &v)| (i as f64, v.ln()))
        .unzip();
    (x.len() >= 2).then(|| stats::linear_fit(&x, &y).0.exp())
}

/// Summands `(mu_j / lambda_j)^2 P (q_j P + 1) / (2 q_j P + 1)^{3/2}`, `j = 0..=n`,
/// of the asymptotic variance of the mean estimator started at stationarity.
pub fn asymptotic_variance_terms(model: &GaussianModel, n: usize) -> Result<Vec<f64>> {
    let cf = closed_form_1d(model, n)?;
    let p = ground_state(model, 1e-14, 1_000_000)?.p_inf[(0, 0)];
    Ok((0..=n)
        .map(|j| {
            let (q, r) = (cf.q[j], cf.mu_over_lambda[j]);
            r * r * p * (q * p + 1.0) / (2.0 * q * p + 1.0).powf(1.5)
        })
        .collect())
}

/// Asymptotic variance `sigma_n^2` of `sqrt(N) (eta_n^N(I) - eta_n(I))` under
/// proportional selection, for a one-dimensional model started at `eta_inf`.
pub fn asymptotic_variance_1d(model: &GaussianModel, n: usize) -> Result<f64> {
    Ok(asymptotic_variance_terms(model, n)?.iter().sum())
}

/// Runs `reps` independent replicates; replicate `r` gets seed
/// `derive_seed(seed, r)`. Replicates are the unit of parallel work and each
/// runs its walkers sequentially, so results do not depend on the backend.
pub fn replicate<T: Send>(reps: usize, backend: Backend, job: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    backend.map(reps, job).into_iter().collect()
}

/// Per-replicate, per-step Euclidean errors of the walker mean against exact
/// means.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    /// `errors[r][n] = |eta_n^N(I) - exact_n|` for replicate `r`.
    pub errors: Vec<Vec<f64>>,
    /// `eta_n^N(G)` per replicate and step.
    pub eta_g: Vec<Vec<f64>>,
}

impl ErrorTable {
    pub fn steps(&self) -> usize {
        self.errors.first().map_or(0, Vec::len)
    }

    /// `sqrt(E|err_n|^2)` per step.
    pub fn l2(&self) -> Vec<f64> {
        (0..self.steps())
            .map(|n| stats::rms(&self.errors.iter().map(|e| e[n]).collect::<Vec<_>>()))
            .collect()
    }

    /// `E|err_n|` per step.
    pub fn mean_abs(&self) -> Vec<f64> {
        (0..self.steps())
            .map(|n| stats::mean(&self.errors.iter().map(|e| e[n]).collect::<Vec<_>>()))
            .collect()
    }
}

/// Replicated walker runs of `model`, compared with `exact_means`
/// (`n_steps + 1` entries).
pub fn replicated_errors<M: FeynmanKacModel + ?Sized>(
    model: &M,
    exact_means: &[Vector],
    n_walkers: usize,
    reps: usize,
    seed: u64,
    policy: SelectionPolicy,
    backend: Backend,
) -> Result<ErrorTable> {
    if exact_means.is_empty() {
        return Err(Error::InvalidArgument("need at least one exact mean".into()));
    }
    let n_steps = exact_means.len() - 1;
    let rows = replicate(reps, backend, |r| {
        let config = RunConfig {
            n_walkers,
            n_steps,
            seed: derive_seed(seed, r as u64),
            policy,
        };
        let series = run(model, config, &[], Backend::Sequential)?;
        let errors = series
            .records
            .iter()
            .zip(exact_means)
            .map(|(rec, m)| rec.mean.iter().zip(m.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect();
        let eta_g = series.records.iter().map(engine::StepRecord::eta_g).collect();
        Ok((errors, eta_g))
    })?;
    let (errors, eta_g) = rows.into_iter().unzip();
    Ok(ErrorTable { errors, eta_g })
}

fn means(flow: &[GaussianMeasure]) -> Vec<Vector> {
    flow.iter().map(|m| m.mean.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_walkers: usize,
    /// `sup_n sqrt(E|eta_n^N(I) - eta_n(I)|^2)`.
    pub sup_l2_error: f64,
    /// Step where the supremum is attained.
    pub argmax_step: usize,
    /// Replicate average of the time-averaged `eta_n^N(G)` after burn-in.
    pub energy: f64,
    /// Between-replicate standard error of `energy`.
    pub energy_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Slope of `ln(sup error)` against `ln N`.
    pub slope: f64,
    pub intercept: f64,
    /// Exact leading eigenvalue for comparison.
    pub e0: f64,
}

/// Error-versus-`N` study of the mean estimator and the energy estimator.
#[allow(clippy::too_many_arguments)]
pub fn convergence_sweep(
    model: &GaussianModel,
    eta0: &GaussianMeasure,
    walker_counts: &[usize],
    n_steps: usize,
    reps: usize,
    seed: u64,
    burn_in: engine::BurnIn,
    backend: Backend,
) -> Result<SweepReport> {
    if walker_counts.len() < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least two walker counts".into()));
    }
    if reps < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least two replicates".into()));
    }
    let fk = GaussianFk::new(model.clone(), eta0.clone())?;
    let exact = means(&exact_flow(model, eta0, n_steps)?);
    let e0 = ground_state(model, 1e-14, 1_000_000)?.e0;
    let mut rows = Vec::new();
    for (i, &n_walkers) in walker_counts.iter().enumerate() {
        let table = replicated_errors(
            &fk,
            &exact,
            n_walkers,
            reps,
            derive_seed(seed, i as u64),
            SelectionPolicy::Proportional,
            backend,
        )?;
        let l2 = table.l2();
        let (argmax_step, sup_l2_error) = l2
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (n, v)| if v > acc.1 { (n, v) } else { acc });
        let start = burn_in.steps(n_walkers);
        if start > n_steps {
            return Err(Error::BurnInTooLong {
                burn_in: start,
                len: n_steps + 1,
            });
        }
        let per_rep: Vec<f64> = table.eta_g.iter().map(|g| stats::mean(&g[start..])).collect();
        rows.push(SweepRow {
            n_walkers,
            sup_l2_error,
            argmax_step,
            energy: stats::mean(&per_rep),
            energy_std_error: stats::std_error(&per_rep),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.n_walkers as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.sup_l2_error.ln()).collect();
    let (slope, intercept) = stats::linear_fit(&x, &y);
    Ok(SweepReport {
        rows,
        slope,
        intercept,
        e0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub n_walkers: usize,
    pub reps: usize,
    /// Replicates that ended early (extinction or walkers leaving the
    /// floating-point range); excluded from the averages.
    pub failed_reps: usize,
    /// `E|eta_n^N(I) - eta_n(I)|` for `n = 0..=n_max`.
    pub mean_abs_error: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Least-squares slope of the log mean error over `[n_max / 2, n_max]`.
    pub slope: f64,
    /// Bootstrap 95% interval of the slope (replicates resampled).
    pub slope_ci: [f64; 2],
    /// The whole interval lies above zero.
    pub growth: bool,
}

impl DivergenceReport {
    /// `E|err_late| / E|err_early|`.
    pub fn ratio(&self, early: usize, late: usize) -> f64 {
        self.mean_abs_error[late] / self.mean_abs_error[early]
    }
}

fn tail_slope(mean_abs: &[f64]) -> f64 {
    let n_max = mean_abs.len() - 1;
    let (x, y): (Vec<f64>, Vec<f64>) = (n_max / 2..=n_max).map(|n| (n as f64, mean_abs[n].ln())).unzip();
    stats::linear_fit(&x, &y).0
}

pub const BOOTSTRAP_SAMPLES: usize = 1000;

/// Replicated error of the walker mean for a one-dimensional model, with a
/// fitted exponential growth rate over the second half of the horizon.
pub fn divergence_experiment(
    model: &GaussianModel,
    eta0: &GaussianMeasure,
    n_walkers: usize,
    n_max: usize,
    reps: usize,
    seed: u64,
    backend: Backend,
) -> Result<DivergenceReport> {
    if model.dim() != 1 {
        return Err(Error::InvalidArgument("the divergence experiment is one-dimensional".into()));
    }
    if reps < 2 || n_max < 4 {
        return Err(Error::InvalidArgument("need at least 2 replicates and 4 steps".into()));
    }
    let fk = GaussianFk::new(model.clone(), eta0.clone())?;
    let exact = means(&exact_flow(model, eta0, n_max)?);
    let rows = replicate(reps, backend, |r| {
        let config = RunConfig {
            n_walkers,
            n_steps: n_max,
            seed: derive_seed(seed, r as u64),
            policy: SelectionPolicy::Proportional,
        };
        match run(&fk, config, &[], Backend::Sequential) {
            Ok(series) => Ok(Some(
                series.records.iter().zip(&exact).map(|(rec, m)| (rec.mean[0] - m[0]).abs()).collect::<Vec<f64>>(),
            )),
            Err(Error::Extinction { .. } | Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let ok: Vec<Vec<f64>> = rows.iter().flatten().cloned().collect();
    let failed_reps = reps - ok.len();
    if ok.len() < 2 {
        return Err(Error::Extinction { step: 0 });
    }
    let column = |n: usize, set: &[&Vec<f64>]| set.iter().map(|e| e[n]).collect::<Vec<f64>>();
    let all: Vec<&Vec<f64>> = ok.iter().collect();
    let mean_abs_error: Vec<f64> = (0..=n_max).map(|n| stats::mean(&column(n, &all))).collect();
    let std_error: Vec<f64> = (0..=n_max).map(|n| stats::std_error(&column(n, &all))).collect();
    let slope = tail_slope(&mean_abs_error);

    let mut boot = rng::substream(seed, Domain::Bootstrap, 0, 0);
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_SAMPLES)
        .map(|_| {
            let sample: Vec<&Vec<f64>> = (0..ok.len()).map(|_| &ok[boot.random_range(0..ok.len())]).collect();
            let m: Vec<f64> = (0..=n_max).map(|n| stats::mean(&column(n, &sample))).collect();
            tail_slope(&m)
        })
        .collect();
    slopes.sort_by(|a, b| a.total_cmp(b));
    let slope_ci = [stats::quantile_sorted(&slopes, 0.025), stats::quantile_sorted(&slopes, 0.975)];
    Ok(DivergenceReport {
        n_walkers,
        reps,
        failed_reps,
        mean_abs_error,
        std_error,
        slope,
        slope_ci,
        growth: slope_ci[0] > 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub step: usize,
    pub n_walkers: usize,
    pub reps: usize,
    /// `N` times the sample variance of `eta_n^N(I) - eta_n(I)`.
    pub scaled_variance: f64,
    /// Approximate standard error of `scaled_variance` (normal theory).
    pub scaled_variance_std_error: f64,
    /// `N` times the mean error, i.e. the scaled bias.
    pub scaled_bias: f64,
    /// `sigma_n^2` from the closed form.
    pub reference: f64,
}

impl CltReport {
    pub fn relative_error(&self) -> f64 {
        (self.scaled_variance / self.reference - 1.0).abs()
    }
}

/// Empirical check of the central limit theorem for the mean estimator at
/// step `n`, started at the quasi-invariant measure.
pub fn clt_empirical(model: &GaussianModel, n: usize, n_walkers: usize, reps: usize, seed: u64, backend: Backend) -> Result<CltReport> {
    if reps < 2 {
        return Err(Error::InvalidArgument("the variance needs at least 2 replicates".into()));
    }
    let gs = ground_state(model, 1e-14, 1_000_000)?;
    let eta_inf = GaussianMeasure::new(Vector::zeros(1), gs.p_inf.clone())?;
    let fk = GaussianFk::new(model.clone(), eta_inf.clone())?;
    let exact = exact_flow(model, &eta_inf, n)?[n].mean[0];
    let errors = replicate(reps, backend, |r| {
        let config = RunConfig {
            n_walkers,
            n_steps: n,
            seed: derive_seed(seed, r as u64),
            policy: SelectionPolicy::Proportional,
        };
        let series = run(&fk, config, &[], Backend::Sequential)?;
        Ok(series.records[n].mean[0] - exact)
    })?;
    let var = stats::sample_variance(&errors);
    let scale = n_walkers as f64;
    Ok(CltReport {
        step: n,
        n_walkers,
        reps,
        scaled_variance: scale * var,
        scaled_variance_std_error: scale * var * (2.0 / (reps - 1) as f64).sqrt(),
        scaled_bias: scale * stats::mean(&errors),
        reference: asymptotic_variance_1d(model, n)?,
    })
}

/// Observables registered by the experiments: every coordinate.
pub fn coordinate_observables(dim: usize) -> Vec<Observable> {
    (0..dim).map(Observable::coordinate).collect()
}
