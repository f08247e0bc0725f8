//! Experiment configuration document.
//!
//! ```toml
//! seed = 42
//!
//! [model]              # or [continuous] with c, d, f, delta, scheme
//! dimension = 1
//! a = [0.5]
//! b = [1.0]
//! s = [1.0]
//!
//! [initial]            # optional, defaults to N(0, I)
//! mean = [1.0]
//! cov = [1.0]
//!
//! [run]
//! walkers = 10000
//! steps = 200
//! reps = 32
//! policy = "proportional"
//! observables = ["x0", "x0^2"]
//! ```
//!
//! The remaining sections (`exact`, `sweep`, `diverge`, `variance`,
//! `importance`) are optional and hold the settings of the subcommand of the
//! same name. Unknown keys are rejected.

use std::path::Path;

use fkdmc::engine::{BurnIn, SelectionPolicy};
use fkdmc::io::{ContinuousSpec, MeasureSpec, ModelSpec};
use fkdmc::{GaussianMeasure, GaussianModel, Matrix, Vector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<MeasureSpec>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub exact: ExactSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub diverge: DivergeSection,
    #[serde(default)]
    pub variance: VarianceSection,
    #[serde(default)]
    pub importance: ImportanceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub walkers: usize,
    pub steps: usize,
    pub reps: usize,
    pub policy: SelectionPolicy,
    /// `x{i}` or `x{i}^2`; empty means every coordinate.
    pub observables: Vec<String>,
    /// Steps discarded before averaging `eta_n(G)`; the default grows like
    /// `10 + 2 ln N`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            walkers: 10_000,
            steps: 200,
            reps: 32,
            policy: SelectionPolicy::Proportional,
            observables: Vec::new(),
            burn_in: None,
        }
    }
}

impl RunSection {
    pub fn burn_in(&self) -> BurnIn {
        self.burn_in.map_or_else(BurnIn::default, BurnIn::Explicit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactSection {
    pub steps: usize,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for ExactSection {
    fn default() -> Self {
        Self {
            steps: 50,
            tolerance: 1e-13,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub walkers: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            walkers: vec![1_000, 10_000, 100_000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DivergeSection {
    pub walkers: usize,
    pub reps: usize,
    pub steps: usize,
    /// Step whose error is the denominator of the reported growth ratio.
    pub early: usize,
}

impl Default for DivergeSection {
    fn default() -> Self {
        Self {
            walkers: 100,
            reps: 200,
            steps: 40,
            early: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarianceSection {
    pub step: usize,
    pub walkers: usize,
    pub reps: usize,
    /// Number of terms of the asymptotic variance series written out.
    pub horizon: usize,
}

impl Default for VarianceSection {
    fn default() -> Self {
        Self {
            step: 20,
            walkers: 100_000,
            reps: 200,
            horizon: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KStepFlow {
    /// Visits `eta_{nk}`.
    #[default]
    Predicted,
    /// Visits the updated measures `psi_G(eta_{nk})`.
    Updated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImportanceSection {
    /// Fixed block length; the smallest stable one is searched when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub k_max: usize,
    pub flow: KStepFlow,
}

impl Default for ImportanceSection {
    fn default() -> Self {
        Self {
            k: None,
            k_max: 60,
            flow: KStepFlow::Predicted,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        config.model()?;
        config.initial()?;
        Ok(config)
    }

    /// Canonical text form; parsing it gives back an identical config.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn model(&self) -> CliResult<GaussianModel> {
        match (&self.model, &self.continuous) {
            (Some(spec), None) => Ok(spec.to_model()?),
            (None, Some(spec)) => Ok(spec.to_model()?),
            _ => Err(CliError::Config(
                "exactly one of the tables `model` and `continuous` must be present".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.model
            .as_ref()
            .map(|m| m.dimension)
            .or(self.continuous.as_ref().map(|c| c.dimension))
            .unwrap_or(0)
    }

    pub fn initial(&self) -> CliResult<GaussianMeasure> {
        let d = self.dim();
        match &self.initial {
            Some(spec) => {
                let mu = spec.to_measure("initial")?;
                if mu.dim() != d {
                    return Err(CliError::Config(format!(
                        "field `initial.mean`: expected {d} entries, got {}",
                        mu.dim()
                    )));
                }
                Ok(mu)
            }
            None => Ok(GaussianMeasure::new(Vector::zeros(d), Matrix::identity(d, d))?),
        }
    }
}
