//! Text schema for Gaussian models and measures.
//!
//! A model is a TOML table with the dimension and row-major matrices:
//!
//! ```toml
//! dimension = 2
//! a = [0.5, 0.1,
//!      0.0, 0.5]
//! b = [1.0, 0.0,
//!      0.0, 1.0]
//! s = [1.0, 0.0,
//!      0.0, 1.0]
//! # time_step = 0.01   (optional)
//! ```
//!
//! A continuous model `dX = CX dt + sqrt(2D) dW` with killing rate
//! `x'Fx/2` uses `c`, `d`, `f`, `delta` and `scheme = "exact" | "euler"`.
//! A measure uses `mean` (length `dimension`) and row-major `cov`.

use serde::{Deserialize, Serialize};

use crate::gaussian::{discretize_continuous, Scheme};
use crate::{linalg, Error, GaussianMeasure, GaussianModel, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dimension: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSpec {
    pub dimension: usize,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub f: Vec<f64>,
    pub delta: f64,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

/// Reads a `dimension x dimension` matrix named `field`.
pub fn matrix_field(field: &str, dimension: usize, entries: &[f64]) -> Result<Matrix> {
    if dimension == 0 {
        return Err(Error::InvalidModel("field `dimension`: must be positive".into()));
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(format!("field `{field}`: entries must be finite")));
    }
    linalg::from_row_major(dimension, entries).ok_or_else(|| {
        Error::InvalidModel(format!(
            "field `{field}`: expected {} entries for a {dimension}x{dimension} matrix, got {}",
            dimension * dimension,
            entries.len()
        ))
    })
}

fn named(field: &str, err: Error) -> Error {
    match err {
        Error::InvalidModel(msg) if !msg.starts_with("field") => Error::InvalidModel(format!("field `{field}`: {msg}")),
        other => other,
    }
}

impl ModelSpec {
    pub fn from_model(model: &GaussianModel) -> Self {
        Self {
            dimension: model.dim(),
            a: linalg::to_row_major(model.a()),
            b: linalg::to_row_major(model.b()),
            s: linalg::to_row_major(model.s()),
            time_step: model.time_step(),
        }
    }

    pub fn to_model(&self) -> Result<GaussianModel> {
        let a = matrix_field("a", self.dimension, &self.a)?;
        let b = matrix_field("b", self.dimension, &self.b)?;
        let s = matrix_field("s", self.dimension, &self.s)?;
        if !linalg::is_positive_definite(&b) {
            return Err(Error::InvalidModel("field `b`: must be symmetric positive definite".into()));
        }
        if !linalg::is_positive_definite(&s) {
            return Err(Error::InvalidModel("field `s`: must be symmetric positive definite".into()));
        }
        let model = GaussianModel::new(a, b, s)?;
        match self.time_step {
            Some(dt) if !(dt > 0.0 && dt.is_finite()) => {
                Err(Error::InvalidModel(format!("field `time_step`: must be positive, got {dt}")))
            }
            Some(dt) => Ok(model.with_time_step(dt)),
            None => Ok(model),
        }
    }
}

impl ContinuousSpec {
    pub fn to_model(&self) -> Result<GaussianModel> {
        let c = matrix_field("c", self.dimension, &self.c)?;
        let d = matrix_field("d", self.dimension, &self.d)?;
        let f = matrix_field("f", self.dimension, &self.f)?;
        if !linalg::is_positive_definite(&d) {
            return Err(Error::InvalidModel("field `d`: must be symmetric positive definite".into()));
        }
        if !linalg::is_positive_definite(&f) {
            return Err(Error::InvalidModel("field `f`: must be symmetric positive definite".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidModel(format!("field `delta`: must be positive, got {}", self.delta)));
        }
        discretize_continuous(&c, &d, &f, self.delta, self.scheme).map_err(|e| named("delta", e))
    }
}

impl MeasureSpec {
    pub fn from_measure(mu: &GaussianMeasure) -> Self {
        Self {
            mean: mu.mean.iter().copied().collect(),
            cov: linalg::to_row_major(&mu.cov),
        }
    }

    /// `prefix` names the enclosing table in error messages.
    pub fn to_measure(&self, prefix: &str) -> Result<GaussianMeasure> {
        let d = self.mean.len();
        if d == 0 {
            return Err(Error::InvalidModel(format!("field `{prefix}.mean`: must not be empty")));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("field `{prefix}.mean`: entries must be finite")));
        }
        let cov = matrix_field(&format!("{prefix}.cov"), d, &self.cov)?;
        if !linalg::is_positive_semidefinite(&cov) {
            return Err(Error::InvalidModel(format!(
                "field `{prefix}.cov`: must be symmetric positive semi-definite"
            )));
        }
        GaussianMeasure::new(Vector::from_vec(self.mean.clone()), cov)
    }
}

/// Parses a model document.
pub fn model_from_toml(text: &str) -> Result<GaussianModel> {
    let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))?;
    spec.to_model()
}

pub fn model_to_toml(model: &GaussianModel) -> String {
    toml::to_string(&ModelSpec::from_model(model)).expect("model spec serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let model = GaussianModel::new(
            Matrix::from_row_slice(2, 2, &[0.1 + 0.2, -1.0 / 3.0, 1e-300, 7.123456789012345e10]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0 / 3.0]),
            Matrix::from_row_slice(2, 2, &[std::f64::consts::PI, 0.0, 0.0, 1.0]),
        )
        .unwrap()
        .with_time_step(0.01);
        let text = model_to_toml(&model);
        let back = model_from_toml(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn errors_name_the_field() {
        let text = "dimension = 2\na = [1.0, 0.0, 0.0]\nb = [1.0, 0.0, 0.0, 1.0]\ns = [1.0, 0.0, 0.0, 1.0]\n";
        let err = model_from_toml(text).unwrap_err().to_string();
        assert!(err.contains("`a`"), "{err}");
        let text = "dimension = 1\na = [1.0]\nb = [-1.0]\ns = [1.0]\n";
        assert!(model_from_toml(text).unwrap_err().to_string().contains("`b`"));
        let text = "dimension = 1\na = [1.0]\nb = [1.0]\ns = [1.0]\nbogus = 3\n";
        assert!(model_from_toml(text).unwrap_err().to_string().contains("bogus"));
        let spec = MeasureSpec {
            mean: vec![0.0],
            cov: vec![-1.0],
        };
        assert!(spec.to_measure("eta0").unwrap_err().to_string().contains("`eta0.cov`"));
    }

    #[test]
    fn continuous_spec() {
        let spec = ContinuousSpec {
            dimension: 1,
            c: vec![-1.0],
            d: vec![0.5],
            f: vec![1.0],
            delta: 0.1,
            scheme: Scheme::Euler,
        };
        let m = spec.to_model().unwrap();
        assert!((m.a()[(0, 0)] - 0.9).abs() < 1e-15);
        assert!((m.b()[(0, 0)] - 0.1).abs() < 1e-15);
        assert_eq!(m.time_step(), Some(0.1));
    }
}
