//! Bounded Levenberg-Marquardt fitting of a registry model to a dataset.
//!
//! Free parameters are optimised in an unbounded internal space:
//!
//! ```text
//! (lo, hi) finite   x = lo + (hi - lo) / (1 + exp(-t))
//! (lo, +inf)        x = lo + exp(t)
//! (-inf, hi)        x = hi - exp(t)
//! unbounded         x = t
//! ```
//!
//! so every trial point is strictly inside its bounds. Residuals are
//! `(model - data) / sigma` where sigma is the data's dI column, or
//! `max(abs_floor, rel * |I|)` when the data carries no uncertainties.

mod lm;
mod report;
mod transform;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{ModelError, ModelRegistry};
use crate::Dataset;

pub use lm::{fit_lm, jacobian_check};
pub use report::{fit_report, FitReport, ReportEntry};
pub use transform::Transform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no free parameter to fit")]
    NoFreeParameter,
    #[error("model has no parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameter '{name}': lower bound {lower} must be below upper bound {upper}")]
    InvalidBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("parameter '{name}': value {value} outside [{lower}, {upper}]")]
    ValueOutsideBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("parameter '{name}': bounds [{lower}, {upper}] exceed the model limits [{model_lower}, {model_upper}]")]
    BoundsOutsideModel {
        name: String,
        lower: f64,
        upper: f64,
        model_lower: f64,
        model_upper: f64,
    },
    #[error("{points} data points cannot support {free} free parameters")]
    DegreesOfFreedomExhausted { points: usize, free: usize },
    #[error("jacobian is singular: parameters {0:?} have no effect on the residuals")]
    SingularJacobian(Vec<String>),
    #[error("model evaluation failed: {0}")]
    EvaluationFailure(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    /// Initial guess, or the pinned value when fixed.
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    /// Absolute sigma floor (cm⁻¹) when the data has no dI.
    pub sigma_abs_floor: f64,
    /// Relative sigma when the data has no dI.
    pub sigma_rel: f64,
    /// Extra runs from deterministically jittered starting points.
    pub restarts: usize,
    /// Also solve by widening the q range stage by stage from the low-q
    /// end, keeping whichever of the two paths ends at lower χ².
    pub continuation: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-10,
            sigma_abs_floor: 1e-6,
            sigma_rel: 0.01,
            restarts: 0,
            continuation: true,
        }
    }
}

/// Model, data and parameter states. Every model parameter appears exactly
/// once, in model order.
#[derive(Debug, Clone)]
pub struct FitProblem {
    registry: Arc<ModelRegistry>,
    model: String,
    dataset: Dataset,
    parameters: Vec<FitParameter>,
}

impl FitProblem {
    /// Starts from every model parameter free at its default and model bounds.
    pub fn builder(
        registry: Arc<ModelRegistry>,
        model: &str,
        dataset: Dataset,
    ) -> FitProblemBuilder {
        FitProblemBuilder {
            registry,
            model: model.to_string(),
            dataset,
            fixed: BTreeMap::new(),
            initial: BTreeMap::new(),
            bounds: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn parameters(&self) -> &[FitParameter] {
        &self.parameters
    }

    pub fn registry(&self) -> &ModelRegistry {
        &self.registry
    }

    pub fn free_parameters(&self) -> impl Iterator<Item = &FitParameter> {
        self.parameters.iter().filter(|p| !p.fixed)
    }

    pub fn n_free(&self) -> usize {
        self.free_parameters().count()
    }

    /// Starting values of every parameter.
    pub fn initial_values(&self) -> BTreeMap<String, f64> {
        self.parameters
            .iter()
            .map(|p| (p.name.clone(), p.value))
            .collect()
    }

    /// Per-point sigma used for weighting.
    pub fn sigmas(&self, opts: &FitOptions) -> Vec<f64> {
        match self.dataset.d_intensity() {
            Some(d) => d.to_vec(),
            None => self
                .dataset
                .intensity()
                .iter()
                .map(|i| (opts.sigma_rel * i.abs()).max(opts.sigma_abs_floor))
                .collect(),
        }
    }

    /// Model intensities at the data q for a complete parameter map.
    pub fn model_intensity(&self, values: &BTreeMap<String, f64>) -> Result<Vec<f64>, FitError> {
        self.model_intensity_at(values, self.dataset.q())
    }

    pub(crate) fn model_intensity_at(
        &self,
        values: &BTreeMap<String, f64>,
        q: &[f64],
    ) -> Result<Vec<f64>, FitError> {
        let resolved = self.registry.resolve_params(&self.model, values)?;
        let out = self.registry.evaluate_resolved(&self.model, &resolved, q)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(FitError::EvaluationFailure(format!(
                "{} returned non-finite intensity",
                self.model
            )));
        }
        Ok(out)
    }
}

pub struct FitProblemBuilder {
    registry: Arc<ModelRegistry>,
    model: String,
    dataset: Dataset,
    fixed: BTreeMap<String, f64>,
    initial: BTreeMap<String, f64>,
    bounds: BTreeMap<String, (f64, f64)>,
}

impl FitProblemBuilder {
    pub fn fix(mut self, name: &str, value: f64) -> Self {
        self.fixed.insert(name.to_string(), value);
        self
    }

    pub fn initial(mut self, name: &str, value: f64) -> Self {
        self.initial.insert(name.to_string(), value);
        self
    }

    pub fn bounds(mut self, name: &str, lower: f64, upper: f64) -> Self {
        self.bounds.insert(name.to_string(), (lower, upper));
        self
    }

    pub fn build(self) -> Result<FitProblem, FitError> {
        let info = self.registry.info(&self.model)?;
        let known = |n: &String| info.parameter(n).is_some();
        for name in self
            .fixed
            .keys()
            .chain(self.initial.keys())
            .chain(self.bounds.keys())
        {
            if !known(name) {
                return Err(FitError::UnknownParameter(name.clone()));
            }
        }
        let mut parameters = Vec::with_capacity(info.parameters.len());
        for spec in &info.parameters {
            let name = spec.name.clone();
            if let Some(&value) = self.fixed.get(&name) {
                if !spec.contains(value) || !value.is_finite() {
                    return Err(FitError::ValueOutsideBounds {
                        name,
                        value,
                        lower: spec.lower,
                        upper: spec.upper,
                    });
                }
                parameters.push(FitParameter {
                    name,
                    value,
                    lower: spec.lower,
                    upper: spec.upper,
                    fixed: true,
                });
                continue;
            }
            let (lower, upper) = self
                .bounds
                .get(&name)
                .copied()
                .unwrap_or((spec.lower, spec.upper));
            if lower >= upper || lower.is_nan() || upper.is_nan() {
                return Err(FitError::InvalidBounds { name, lower, upper });
            }
            if lower < spec.lower || upper > spec.upper {
                return Err(FitError::BoundsOutsideModel {
                    name,
                    lower,
                    upper,
                    model_lower: spec.lower,
                    model_upper: spec.upper,
                });
            }
            let value = self.initial.get(&name).copied().unwrap_or(spec.default);
            if !(value >= lower && value <= upper) {
                return Err(FitError::ValueOutsideBounds {
                    name,
                    value,
                    lower,
                    upper,
                });
            }
            parameters.push(FitParameter {
                name,
                value,
                lower,
                upper,
                fixed: false,
            });
        }
        let problem = FitProblem {
            registry: self.registry,
            model: self.model,
            dataset: self.dataset,
            parameters,
        };
        let free = problem.n_free();
        if free == 0 {
            return Err(FitError::NoFreeParameter);
        }
        if problem.dataset.len() <= free {
            return Err(FitError::DegreesOfFreedomExhausted {
                points: problem.dataset.len(),
                free,
            });
        }
        Ok(problem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Residuals are exactly zero.
    ZeroResidual,
    /// Relative χ² change fell below `ftol`.
    Ftol,
    /// Step norm fell below `xtol`.
    Xtol,
    MaxIterations,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    /// Every parameter, free and fixed.
    pub values: BTreeMap<String, f64>,
    /// One-sigma uncertainty for free parameters.
    pub uncertainties: BTreeMap<String, f64>,
    pub fixed: BTreeMap<String, f64>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    /// `(model - data) / sigma` per point.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// `(I_model - I) / sigma` for a trial point; every parameter missing from
/// `trial` takes its starting value.
pub fn residuals(
    p: &FitProblem,
    trial: &BTreeMap<String, f64>,
    opts: &FitOptions,
) -> Result<Vec<f64>, FitError> {
    let mut values = p.initial_values();
    for (name, &v) in trial {
        let Some(param) = p.parameters.iter().find(|q| &q.name == name) else {
            return Err(FitError::UnknownParameter(name.clone()));
        };
        if !param.fixed && !(v >= param.lower && v <= param.upper) {
            return Err(FitError::ValueOutsideBounds {
                name: name.clone(),
                value: v,
                lower: param.lower,
                upper: param.upper,
            });
        }
        values.insert(name.clone(), v);
    }
    let model = p.model_intensity(&values)?;
    Ok(weighted(&model, p.dataset.intensity(), &p.sigmas(opts)))
}

pub(crate) fn weighted(model: &[f64], data: &[f64], sigma: &[f64]) -> Vec<f64> {
    model
        .iter()
        .zip(data)
        .zip(sigma)
        .map(|((m, d), s)| (m - d) / s)
        .collect()
}

/// `Σ r² / (N - n_free)`.
pub fn chi2_reduced(residuals: &[f64], n_free: usize) -> Result<f64, FitError> {
    let n = residuals.len();
    if n <= n_free {
        return Err(FitError::DegreesOfFreedomExhausted {
            points: n,
            free: n_free,
        });
    }
    let chi2: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(chi2 / (n - n_free) as f64)
}
