//! Closed-form Feynman-Kac flow of the linear-Gaussian model.
//!
//! The model `(A, B, S)` on `R^d` pairs the Markov kernel
//! `P(x, dy) = N(Ax, B)` with the potential `G(x) = exp(-x'Sx/2)`.
//! Starting from a Gaussian `eta_0 = N(m_0, Omega_0)` the normalized flow
//! `eta_{n+1} = psi_G(eta_n) P` stays Gaussian with
//!
//! ```text
//! m_{n+1} = E(Omega_n) m_n,   E(W) = A (I + W S)^{-1}
//! Omega_{n+1} = Phi(Omega_n), Phi(W) = A (I + W S)^{-1} W A' + B
//! ```
//!
//! Everything here is deterministic and free of shared state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, PD_TOL};
use crate::{Error, Matrix, Result, Vector};

/// Default stopping tolerance (max-norm between iterates) for Riccati solves.
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Kernel `N(Ax, B)` with potential `exp(-x'Sx/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    a: Matrix,
    b: Matrix,
    s: Matrix,
    time_step: Option<f64>,
}

impl GaussianModel {
    /// Validates `B` and `S` symmetric positive definite; `A` is unrestricted.
    pub fn new(a: Matrix, b: Matrix, s: Matrix) -> Result<Self> {
        Self::validated(a, b, s, true)
    }

    /// Like [`GaussianModel::new`] but only requires `S` to be positive
    /// semi-definite. Used for updated-measure models whose potential may be
    /// degenerate.
    pub fn with_semidefinite_potential(a: Matrix, b: Matrix, s: Matrix) -> Result<Self> {
        Self::validated(a, b, s, false)
    }

    pub fn scalar(a: f64, b: f64, s: f64) -> Result<Self> {
        Self::new(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Matrix::from_element(1, 1, s),
        )
    }

    fn validated(a: Matrix, b: Matrix, s: Matrix, strict_s: bool) -> Result<Self> {
        let d = a.nrows();
        if d == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        for (name, m) in [("A", &a), ("B", &b), ("S", &s)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::InvalidModel(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
            }
        }
        if !linalg::is_positive_definite(&b) {
            return Err(Error::InvalidModel("B must be symmetric positive definite".into()));
        }
        let s_ok = if strict_s {
            linalg::is_positive_definite(&s)
        } else {
            linalg::is_positive_semidefinite(&s)
        };
        if !s_ok {
            let kind = if strict_s { "definite" } else { "semi-definite" };
            return Err(Error::InvalidModel(format!("S must be symmetric positive {kind}")));
        }
        let b = linalg::symmetrize(&b);
        let s = linalg::symmetrize(&s);
        Ok(Self {
            a,
            b,
            s,
            time_step: None,
        })
    }

    /// Attaches the time step of the continuous model this one discretizes.
    pub fn with_time_step(mut self, delta: f64) -> Self {
        self.time_step = Some(delta);
        self
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn s(&self) -> &Matrix {
        &self.s
    }
    pub fn time_step(&self) -> Option<f64> {
        self.time_step
    }

    fn identity(&self) -> Matrix {
        Matrix::identity(self.dim(), self.dim())
    }

    /// `(I + Omega S)^{-1}`.
    fn resolvent(&self, omega: &Matrix) -> Result<Matrix> {
        linalg::inverse(&(self.identity() + omega * &self.s), "resolvent (I + Omega S)^-1")
    }

    /// `E(Omega) = A (I + Omega S)^{-1}`.
    pub fn e_map(&self, omega: &Matrix) -> Result<Matrix> {
        Ok(&self.a * self.resolvent(omega)?)
    }

    /// `Phi(Omega) = A (I + Omega S)^{-1} Omega A' + B`.
    pub fn phi_map(&self, omega: &Matrix) -> Result<Matrix> {
        let r = self.resolvent(omega)?;
        Ok(linalg::symmetrize(&(&self.a * r * omega * self.a.transpose() + &self.b)))
    }

    /// One Riccati step `X -> A'(XB + I)^{-1} X A + S`. Its fixed point is
    /// the quadratic form of the ground state.
    pub fn riccati_map(&self, x: &Matrix) -> Result<Matrix> {
        let m = x * &self.b + self.identity();
        let inner = linalg::solve(&m, x, "Riccati map (XB + I)^-1")?;
        Ok(linalg::symmetrize(&(self.a.transpose() * inner * &self.a + &self.s)))
    }

    /// Boltzmann-Gibbs update `psi_G(mu)`.
    pub fn update(&self, mu: &GaussianMeasure) -> Result<GaussianMeasure> {
        let r = self.resolvent(&mu.cov)?;
        Ok(GaussianMeasure {
            mean: &r * &mu.mean,
            cov: linalg::symmetrize(&(&r * &mu.cov)),
        })
    }

    /// Free evolution `mu P`.
    pub fn predict(&self, mu: &GaussianMeasure) -> GaussianMeasure {
        GaussianMeasure {
            mean: &self.a * &mu.mean,
            cov: linalg::symmetrize(&(&self.a * &mu.cov * self.a.transpose() + &self.b)),
        }
    }

    /// One step of the normalized flow, `psi_G(mu) P`.
    pub fn step(&self, mu: &GaussianMeasure) -> Result<GaussianMeasure> {
        Ok(self.predict(&self.update(mu)?))
    }

    /// `mu(G) = det(I + Omega S)^{-1/2} exp(-m' S (I + Omega S)^{-1} m / 2)`.
    pub fn expected_potential(&self, mu: &GaussianMeasure) -> Result<f64> {
        let m = self.identity() + &mu.cov * &self.s;
        let det = m.determinant();
        if !(det > 0.0) {
            return Err(Error::Numeric {
                context: "expected potential",
                detail: format!("det(I + Omega S) = {det}"),
            });
        }
        let r = linalg::inverse(&m, "expected potential")?;
        let quad = linalg::quad_form(&linalg::symmetrize(&(&self.s * r)), &mu.mean);
        Ok(det.powf(-0.5) * (-0.5 * quad).exp())
    }

    pub fn potential(&self, x: &Vector) -> f64 {
        (-0.5 * linalg::quad_form(&self.s, x)).exp()
    }
}

/// `N(mean, cov)` with `cov` symmetric positive semi-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianMeasure {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::InvalidArgument(format!(
                "covariance is {}x{} for a mean of length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        if !linalg::is_positive_semidefinite(&cov) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "covariance must be symmetric positive semi-definite".into(),
            ));
        }
        Ok(Self {
            mean,
            cov: linalg::symmetrize(&cov),
        })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(Vector::from_element(1, mean), Matrix::from_element(1, 1, var))
    }

    pub fn point_mass(x: Vector) -> Self {
        let d = x.len();
        Self {
            mean: x,
            cov: Matrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn phi_map(omega: &Matrix, model: &GaussianModel) -> Result<Matrix> {
    model.phi_map(omega)
}

pub fn e_map(omega: &Matrix, model: &GaussianModel) -> Result<Matrix> {
    model.e_map(omega)
}

/// `eta_0, ..., eta_n` of the normalized flow.
pub fn exact_flow(model: &GaussianModel, eta0: &GaussianMeasure, n: usize) -> Result<Vec<GaussianMeasure>> {
    check_dim(model, eta0)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(eta0.clone());
    for _ in 0..n {
        let next = model.step(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

/// `psi_G(eta_0), ..., psi_G(eta_n)`: the flow of updated measures.
pub fn updated_flow(model: &GaussianModel, eta0: &GaussianMeasure, n: usize) -> Result<Vec<GaussianMeasure>> {
    exact_flow(model, eta0, n)?.iter().map(|mu| model.update(mu)).collect()
}

fn check_dim(model: &GaussianModel, mu: &GaussianMeasure) -> Result<()> {
    if model.dim() != mu.dim() {
        return Err(Error::InvalidArgument(format!(
            "measure has dimension {} but the model has dimension {}",
            mu.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// Leading eigen-triple of `Q = G P`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateTriple {
    /// Quadratic form of the ground state `h(x) = exp(-x' S_inf x / 2)`.
    pub s_inf: Matrix,
    /// Leading eigenvalue `det(I + B S_inf)^{-1/2}`.
    pub e0: f64,
    /// Covariance of the quasi-invariant measure `N(0, P_inf)`.
    pub p_inf: Matrix,
    /// `max |S_inf - riccati_map(S_inf)|`.
    pub riccati_residual: f64,
    /// Riccati iterations used for `S_inf`.
    pub iterations: usize,
    /// `max |P_inf - Phi(P_inf)|`.
    pub covariance_residual: f64,
}

impl GroundStateTriple {
    pub fn ground_state(&self, x: &Vector) -> f64 {
        (-0.5 * linalg::quad_form(&self.s_inf, x)).exp()
    }

    /// `-log(E0) / delta`, the continuous-time energy.
    pub fn energy(&self, delta: f64) -> f64 {
        -self.e0.ln() / delta
    }
}

/// Solves both fixed points by plain iteration with max-norm stopping.
pub fn ground_state(model: &GaussianModel, tol: f64, max_iter: usize) -> Result<GroundStateTriple> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (s_inf, iterations) = fixed_point(model.s().clone(), tol, max_iter, "Riccati iteration for S_inf", |x| {
        model.riccati_map(x)
    })?;
    let d = model.dim();
    let (p_inf, _) = fixed_point(Matrix::zeros(d, d), tol, max_iter, "covariance iteration for P_inf", |x| {
        model.phi_map(x)
    })?;
    let det = (Matrix::identity(d, d) + model.b() * &s_inf).determinant();
    let riccati_residual = linalg::max_abs_diff(&s_inf, &model.riccati_map(&s_inf)?);
    let covariance_residual = linalg::max_abs_diff(&p_inf, &model.phi_map(&p_inf)?);
    Ok(GroundStateTriple {
        s_inf,
        e0: det.powf(-0.5),
        p_inf,
        riccati_residual,
        iterations,
        covariance_residual,
    })
}

fn fixed_point(
    start: Matrix,
    tol: f64,
    max_iter: usize,
    what: &'static str,
    mut map: impl FnMut(&Matrix) -> Result<Matrix>,
) -> Result<(Matrix, usize)> {
    let mut x = start;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = map(&x)?;
        residual = linalg::max_abs_diff(&next, &x);
        x = next;
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            return Ok((x, it));
        }
    }
    Err(Error::NonConvergence {
        what,
        iterations: max_iter,
        residual,
    })
}

/// Parameters of `Q^n(1)(x) = lambda_n exp(-q_n x^2 / 2)` and
/// `Q^n(I)(x) = mu_n x exp(-q_n x^2 / 2)`; index `n` counts applications of
/// `Q`, so index 0 is the identity operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm1D {
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// `mu_n / lambda_n`, accumulated directly so it survives when both
    /// underflow.
    pub mu_over_lambda: Vec<f64>,
}

impl ClosedForm1D {
    pub fn q_one(&self, n: usize, x: f64) -> f64 {
        self.lambda[n] * (-0.5 * self.q[n] * x * x).exp()
    }

    pub fn q_identity(&self, n: usize, x: f64) -> f64 {
        self.mu[n] * x * (-0.5 * self.q[n] * x * x).exp()
    }
}

pub fn closed_form_1d(model: &GaussianModel, n: usize) -> Result<ClosedForm1D> {
    let (a, b, s) = scalar_params(model)?;
    let mut cf = ClosedForm1D {
        q: vec![0.0],
        lambda: vec![1.0],
        mu: vec![1.0],
        mu_over_lambda: vec![1.0],
    };
    for j in 0..n {
        let q = cf.q[j];
        let g = 1.0 + q * b;
        cf.q.push(a * a * q / g + s);
        cf.lambda.push(cf.lambda[j] / g.sqrt());
        cf.mu.push(a * cf.mu[j] / g.powf(1.5));
        cf.mu_over_lambda.push(a * cf.mu_over_lambda[j] / g);
    }
    Ok(cf)
}

pub(crate) fn scalar_params(model: &GaussianModel) -> Result<(f64, f64, f64)> {
    if model.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "operation requires a one-dimensional model, got dimension {}",
            model.dim()
        )));
    }
    Ok((model.a()[(0, 0)], model.b()[(0, 0)], model.s()[(0, 0)]))
}

/// Pushes `exp(x'Fx/2)` through the kernel:
/// `P(exp(x'Fx/2)) = factor * exp(x' F_out x / 2)`.
pub fn quadratic_push(model: &GaussianModel, f: &Matrix) -> Result<(f64, Matrix)> {
    let d = model.dim();
    if f.nrows() != d || f.ncols() != d || !linalg::is_symmetric(f, 1e-9) {
        return Err(Error::InvalidArgument(format!("F must be a symmetric {d}x{d} matrix")));
    }
    let b_half = linalg::sym_sqrt(model.b())?;
    let id = Matrix::identity(d, d);
    let min_eig = linalg::min_eigenvalue(&(&id - &b_half * f * &b_half));
    if !(min_eig > PD_TOL) {
        return Err(Error::NonIntegrable { min_eigenvalue: min_eig });
    }
    let det = (&id - model.b() * f).determinant();
    let inner = linalg::solve(&(&id - f * model.b()), &(f * model.a()), "quadratic push (I - FB)^-1")?;
    let f_out = linalg::symmetrize(&(model.a().transpose() * inner));
    Ok((det.powf(-0.5), f_out))
}

/// Same as [`quadratic_push`] for `Q = G P`: `Q(exp(x'Fx/2)) = factor * exp(x' F_out x / 2)`.
pub fn quadratic_q_push(model: &GaussianModel, f: &Matrix) -> Result<(f64, Matrix)> {
    let (factor, f_out) = quadratic_push(model, f)?;
    Ok((factor, f_out - model.s()))
}

/// The `k`-fold semigroup `Q^k = G^(k) P^(k)` with
/// `G^(k)(x) ∝ exp(-x' S_k x / 2)` and `P^(k)(x, .) = N(A_k x, B_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorPowers {
    pub k: usize,
    pub a_k: Matrix,
    pub b_k: Matrix,
    pub s_k: Matrix,
}

/// `A_k = E(Phi^{k-1}(0)) ... E(0)`, `B_k = Phi^k(0)` and
/// `S_k = sum_{l<k} E_l(0)' (S^{-1} + Phi^l(0))^{-1} E_l(0)`.
pub fn propagator_powers(model: &GaussianModel, k: usize) -> Result<PropagatorPowers> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let d = model.dim();
    let id = Matrix::identity(d, d);
    let mut omega = Matrix::zeros(d, d);
    let mut drift = id.clone();
    let mut s_k = Matrix::zeros(d, d);
    for _ in 0..k {
        // (S^-1 + Omega)^-1 = S (I + Omega S)^-1, valid for singular S too.
        let r = linalg::inverse(&(&id + &omega * model.s()), "propagator powers")?;
        let tilt = linalg::symmetrize(&(model.s() * r));
        s_k += drift.transpose() * tilt * &drift;
        drift = model.e_map(&omega)? * drift;
        omega = model.phi_map(&omega)?;
    }
    Ok(PropagatorPowers {
        k,
        a_k: drift,
        b_k: omega,
        s_k: linalg::symmetrize(&s_k),
    })
}

/// Evolution operators of the updated measures `psi_G(eta_n)`:
/// `Ghat ∝ exp(-x' Shat x / 2)` and `Phat(x, .) = N(Ahat x, Bhat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HatModel {
    pub model: GaussianModel,
    /// `Shat` is singular; Lyapunov constructions refuse such models.
    pub degenerate: bool,
}

pub fn hat_model(model: &GaussianModel) -> Result<HatModel> {
    let d = model.dim();
    let id = Matrix::identity(d, d);
    let b_inv = linalg::inverse(model.b(), "hat model B^-1")?;
    let b_hat = linalg::symmetrize(&linalg::inverse(&(&b_inv + model.s()), "hat model (B^-1 + S)^-1")?);
    let a_hat = &b_hat * &b_inv * model.a();
    // S - S (B^-1 + S)^-1 S = (S^-1 + B)^-1 = S (I + B S)^-1
    let tilt = linalg::symmetrize(&(model.s() * linalg::inverse(&(&id + model.b() * model.s()), "hat model")?));
    let s_hat = linalg::symmetrize(&(model.a().transpose() * tilt * model.a()));
    let degenerate = !linalg::is_positive_definite(&s_hat);
    let mut hat = GaussianModel::with_semidefinite_potential(a_hat, b_hat, s_hat)?;
    hat.time_step = model.time_step;
    Ok(HatModel { model: hat, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Exact transition of the linear SDE over one step.
    Exact,
    /// Euler-Maruyama.
    Euler,
}

/// Discretizes `dX = C X dt + sqrt(2D) dW` killed at rate `U(x) = x'Fx/2`
/// into a Gaussian model with time step `delta` and `S = F delta`.
pub fn discretize_continuous(c: &Matrix, d: &Matrix, f: &Matrix, delta: f64, scheme: Scheme) -> Result<GaussianModel> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {delta}")));
    }
    let dim = c.nrows();
    let id = Matrix::identity(dim, dim);
    let (a, b) = match scheme {
        Scheme::Euler => (&id + c * delta, d * (2.0 * delta)),
        Scheme::Exact => {
            // Van Loan: exp([[-C, 2D], [0, C']] delta) = [[., F12], [0, F22]],
            // exp(C delta) = F22' and int_0^delta e^{Cs} 2D e^{C's} ds = F22' F12.
            if c.nrows() != c.ncols() || d.shape() != c.shape() {
                return Err(Error::InvalidModel("C and D must be square of equal size".into()));
            }
            let mut block = DMatrix::zeros(2 * dim, 2 * dim);
            block.view_mut((0, 0), (dim, dim)).copy_from(&(-c * delta));
            block.view_mut((0, dim), (dim, dim)).copy_from(&(d * (2.0 * delta)));
            block.view_mut((dim, dim), (dim, dim)).copy_from(&(c.transpose() * delta));
            let e = block.exp();
            let f12 = e.view((0, dim), (dim, dim)).into_owned();
            let f22 = e.view((dim, dim), (dim, dim)).into_owned();
            let a = f22.transpose();
            let b = linalg::symmetrize(&(&a * f12));
            (a, b)
        }
    };
    Ok(GaussianModel::new(a, b, f * delta)?.with_time_step(delta))
}
