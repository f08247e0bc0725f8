//! Brute-force oracle: trapezoid discretization of the one-dimensional
//! integral operator `Q(x, dy) = G(x) p(x, y) dy` of a Gaussian model.
//!
//! Nothing here uses the Riccati or Kalman recursions, so it gives an
//! independent check of the closed forms in [`crate::gaussian`], of the
//! normalized flow and of asymptotic variance sums.

use std::f64::consts::PI;

use crate::gaussian::{scalar_params, GaussianModel};
use crate::{Error, Matrix, Result, Vector};

/// Default half-width in units of the largest relevant standard deviation.
pub const DEFAULT_WIDTH_SDS: f64 = 8.0;
pub const DEFAULT_GRID_SIZE: usize = 2001;

/// `M x M` matrix with entries `G(x_i) p(x_i, x_j) w_j` on a uniform grid of
/// `[-L, L]` with trapezoid weights `w`.
#[derive(Debug, Clone)]
pub struct GridOperator {
    pub half_width: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub q_matrix: Matrix,
    /// Model parameters `(A, B, S)`; `S` is reported even when the unit
    /// potential switch replaced `G` by 1.
    pub params: (f64, f64, f64),
    pub unit_potential: bool,
}

fn gaussian_density(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

impl GridOperator {
    /// Discretizes `Q = G P`, or `P` alone when `unit_potential` is set.
    pub fn new(model: &GaussianModel, half_width: f64, size: usize, unit_potential: bool) -> Result<Self> {
        let (a, b, s) = scalar_params(model)?;
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!("grid half-width must be positive, got {half_width}")));
        }
        if size < 3 || size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("grid size must be odd and at least 3, got {size}")));
        }
        let h = 2.0 * half_width / (size - 1) as f64;
        let nodes: Vec<f64> = (0..size).map(|i| -half_width + i as f64 * h).collect();
        let mut weights = vec![h; size];
        weights[0] = h / 2.0;
        weights[size - 1] = h / 2.0;
        let q_matrix = Matrix::from_fn(size, size, |i, j| {
            let g = if unit_potential { 1.0 } else { (-0.5 * s * nodes[i] * nodes[i]).exp() };
            g * gaussian_density(nodes[j], a * nodes[i], b) * weights[j]
        });
        Ok(Self {
            half_width,
            nodes,
            weights,
            q_matrix,
            params: (a, b, s),
            unit_potential,
        })
    }

    /// Grid with the default half-width `8 max(sqrt B, sqrt P_inf)` and
    /// [`DEFAULT_GRID_SIZE`] nodes.
    pub fn with_defaults(model: &GaussianModel, p_inf: f64) -> Result<Self> {
        let (_, b, _) = scalar_params(model)?;
        let width = DEFAULT_WIDTH_SDS * b.max(p_inf).sqrt();
        Self::new(model, width, DEFAULT_GRID_SIZE, false)
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector::from_iterator(self.size(), self.nodes.iter().map(|&x| f(x)))
    }

    /// Right action on functions: `Q(f)(x_i)`.
    pub fn apply(&self, f: &Vector) -> Vector {
        &self.q_matrix * f
    }

    /// `Q^n(f)` at every node.
    pub fn power_apply(&self, f: &Vector, n: usize) -> Vector {
        let mut v = f.clone();
        for _ in 0..n {
            v = self.apply(&v);
        }
        v
    }

    /// Left action on densities: `(eta Q)(x_j)`.
    pub fn apply_left(&self, density: &Vector) -> Vector {
        let weighted = density.component_mul(&Vector::from_column_slice(&self.weights));
        let mut out = self.q_matrix.tr_mul(&weighted);
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
        out
    }

    /// Trapezoid integral of the sampled function.
    pub fn integrate(&self, f: &Vector) -> f64 {
        f.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Largest asymmetry of `diag(sqrt(w) r) K diag(sqrt(w) / r)` relative
    /// to its largest entry, where `K = Q diag(w)^-1` and
    /// `r(x) = exp(x^2 (S + (A^2 - 1) / B) / 4)` symmetrizes the Gaussian
    /// kernel. Zero up to rounding for every one-dimensional model, which is
    /// always reversible in the sense `AB = BA'`.
    pub fn reversibility_defect(&self) -> f64 {
        let (a, b, s) = self.params;
        let s = if self.unit_potential { 0.0 } else { s };
        let c = (s + (a * a - 1.0) / b) / 4.0;
        let n = self.size();
        // Work in log space: r can overflow at the grid edges.
        let log_r: Vec<f64> = self.nodes.iter().map(|x| c * x * x).collect();
        let sym = Matrix::from_fn(n, n, |i, j| {
            let k = self.q_matrix[(i, j)] / self.weights[j];
            if k == 0.0 {
                return 0.0;
            }
            (k.ln() + log_r[i] - log_r[j]).exp() * (self.weights[i] * self.weights[j]).sqrt()
        });
        let scale = sym.amax();
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                defect = defect.max((sym[(i, j)] - sym[(j, i)]).abs());
            }
        }
        defect / scale
    }
}

/// Leading eigenpair of the discretized operator.
#[derive(Debug, Clone)]
pub struct PowerIteration {
    pub eigenvalue: f64,
    /// Right eigenvector, unit Euclidean norm, positive.
    pub eigenvector: Vector,
    pub iterations: usize,
}

/// Normalized power iteration, stopped once the eigenvalue estimate has moved
/// by less than `1e-12` over the last 10 iterations.
pub fn power_iteration(op: &GridOperator, max_iter: usize) -> Result<PowerIteration> {
    const DRIFT: f64 = 1e-12;
    const WINDOW: usize = 10;
    let mut v = Vector::from_element(op.size(), 1.0);
    v /= v.norm();
    let mut history: Vec<f64> = Vec::new();
    for it in 1..=max_iter {
        let w = op.apply(&v);
        let lambda = v.dot(&w);
        let norm = w.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric {
                context: "power iteration",
                detail: format!("iterate norm {norm} at iteration {it}"),
            });
        }
        v = w / norm;
        history.push(lambda);
        if history.len() > WINDOW {
            let past = history[history.len() - 1 - WINDOW];
            if (lambda - past).abs() < DRIFT {
                let w = op.apply(&v);
                return Ok(PowerIteration {
                    eigenvalue: v.dot(&w),
                    eigenvector: v,
                    iterations: it,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        what: "grid power iteration",
        iterations: max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

pub fn cosine_similarity(a: &Vector, b: &Vector) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// Normalized density with its first two moments.
#[derive(Debug, Clone)]
pub struct GridMeasure {
    pub density: Vector,
    pub mean: f64,
    pub variance: f64,
}

impl GridMeasure {
    pub fn new(op: &GridOperator, density: Vector) -> Result<Self> {
        let mass = op.integrate(&density);
        if !(mass > 0.0) || !mass.is_finite() || density.iter().any(|&v| v < 0.0) {
            return Err(Error::Numeric {
                context: "grid measure",
                detail: format!("density mass {mass} is not positive and finite"),
            });
        }
        let density = density / mass;
        let mean = op.integrate(&density.zip_map(&op.sample(|x| x), |p, x| p * x));
        let second = op.integrate(&density.zip_map(&op.sample(|x| x * x), |p, x| p * x));
        Ok(Self {
            density,
            mean,
            variance: second - mean * mean,
        })
    }

    /// `mu(f)` for `f` sampled on the grid.
    pub fn expect(&self, op: &GridOperator, f: &Vector) -> f64 {
        op.integrate(&self.density.component_mul(f))
    }
}

/// `eta_0, ..., eta_n` of the normalized flow `eta Q / eta Q(1)`.
pub fn grid_flow(op: &GridOperator, eta0: &Vector, n: usize) -> Result<Vec<GridMeasure>> {
    let mut out = vec![GridMeasure::new(op, eta0.clone())?];
    for _ in 0..n {
        let next = op.apply_left(&out.last().expect("non-empty").density);
        out.push(GridMeasure::new(op, next)?);
    }
    Ok(out)
}

/// Asymptotic variance of `sqrt(N) (eta_n^N(I) - eta_n(I))` under
/// proportional selection, by quadrature of
/// `sum_{p=0}^{n} eta_p[(Q^{n-p}(I - eta_n(I)))^2] / (eta_p Q^{n-p}(1))^2`
/// with the flow started from `eta0`.
pub fn grid_asymptotic_variance(op: &GridOperator, eta0: &Vector, n: usize) -> Result<f64> {
    let flow = grid_flow(op, eta0, n)?;
    let centered = op.sample(|x| x - flow[n].mean);
    let mut f = centered;
    let mut one = Vector::from_element(op.size(), 1.0);
    let mut total = 0.0;
    for j in 0..=n {
        let eta = &flow[n - j];
        let num = eta.expect(op, &f.component_mul(&f));
        let den = eta.expect(op, &one);
        total += num / (den * den);
        f = op.apply(&f);
        one = op.apply(&one);
    }
    Ok(total)
}
