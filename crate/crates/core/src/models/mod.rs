//! Form-factor model registry and synthetic data generation.
//!
//! Every model reports intensity in absolute units (cm⁻¹). Lengths are in
//! Å, SLDs in 1e-6 Å⁻², so `1e-4 · V · Δρ²` converts to cm⁻¹.
//! Polydispersity and resolution smearing are not supported; parameters
//! like `radius_pd` are rejected as unknown.

mod shapes;
pub mod special;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, DatasetSource};

pub use shapes::{Cylinder, Ellipsoid, Lamellar, Sphere};

/// Default grid when the caller gives no q range.
pub const DEFAULT_QMIN: f64 = 1e-3;
pub const DEFAULT_QMAX: f64 = 1.0;
pub const DEFAULT_QPOINTS: usize = 200;

pub const SLD_UNITS: &str = "1e-6/Å^2";
pub const LENGTH_UNITS: &str = "Å";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameter '{name}' = {value} outside [{lower}, {upper}]")]
    ParameterOutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("parameter '{0}' is not finite")]
    NonFiniteParameter(String),
    #[error("invalid q range: need 0 < qmin < qmax and n >= 2 (got {qmin}, {qmax}, {n})")]
    InvalidRange { qmin: f64, qmax: f64, n: usize },
    #[error("q grid must be non-empty, positive and strictly ascending")]
    InvalidQGrid,
    #[error("noise fraction must be in [0, 1), got {0}")]
    InvalidNoise(f64),
    #[error("model '{0}' is already registered")]
    DuplicateModel(String),
    #[error("invalid model definition: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSpec {
    pub name: String,
    pub units: String,
    pub default: f64,
    pub lower: f64,
    pub upper: f64,
    pub description: String,
}

impl ParameterSpec {
    pub fn new(
        name: &str,
        units: &str,
        default: f64,
        (lower, upper): (f64, f64),
        description: &str,
    ) -> Self {
        Self {
            name: name.to_string(),
            units: units.to_string(),
            default,
            lower,
            upper,
            description: description.to_string(),
        }
    }

    pub fn scale() -> Self {
        Self::new(
            "scale",
            "",
            1.0,
            (0.0, f64::INFINITY),
            "Volume fraction or arbitrary scale factor",
        )
    }

    pub fn background() -> Self {
        Self::new(
            "background",
            "1/cm",
            0.001,
            (f64::NEG_INFINITY, f64::INFINITY),
            "Flat background level",
        )
    }

    pub fn sld(name: &str, default: f64, description: &str) -> Self {
        Self::new(
            name,
            SLD_UNITS,
            default,
            (f64::NEG_INFINITY, f64::INFINITY),
            description,
        )
    }

    pub fn length(name: &str, default: f64, description: &str) -> Self {
        Self::new(
            name,
            LENGTH_UNITS,
            default,
            (0.0, f64::INFINITY),
            description,
        )
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

/// Identity, parameters and documentation of a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub title: String,
    pub category: String,
    pub description: String,
    pub equation: String,
    pub parameters: Vec<ParameterSpec>,
    pub doc_text: String,
}

impl ModelInfo {
    /// Builds the info, prepending `scale` and `background` to the
    /// model-specific parameters and rendering the documentation text.
    pub fn new(
        name: &str,
        title: &str,
        category: &str,
        description: &str,
        equation: &str,
        specific: Vec<ParameterSpec>,
    ) -> Self {
        let mut parameters = vec![ParameterSpec::scale(), ParameterSpec::background()];
        parameters.extend(specific);
        let mut info = Self {
            name: name.to_string(),
            title: title.to_string(),
            category: category.to_string(),
            description: description.to_string(),
            equation: equation.to_string(),
            parameters,
            doc_text: String::new(),
        };
        info.doc_text = render_doc(&info);
        info
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn parameter_names(&self) -> impl Iterator<Item = &str> {
        self.parameters.iter().map(|p| p.name.as_str())
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidModel(format!("{}: {m}", self.name)));
        if self.name.is_empty() {
            return bad("empty name".into());
        }
        for required in ["scale", "background"] {
            if self.parameter(required).is_none() {
                return bad(format!("missing '{required}' parameter"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return bad(format!("duplicate parameter '{}'", p.name));
            }
            if !(p.lower <= p.default && p.default <= p.upper) {
                return bad(format!("default of '{}' outside its bounds", p.name));
            }
        }
        Ok(())
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn render_doc(info: &ModelInfo) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", info.title);
    let _ = writeln!(s, "Model: {}", info.name);
    let _ = writeln!(s, "Category: {}", info.category);
    let _ = writeln!(s, "\nDescription\n{}", info.description);
    let _ = writeln!(s, "\nParameters");
    let _ = writeln!(s, "name | units | default | lower | upper | description");
    for p in &info.parameters {
        let _ = writeln!(
            s,
            "{} | {} | {} | {} | {} | {}",
            p.name,
            if p.units.is_empty() { "none" } else { &p.units },
            p.default,
            fmt_bound(p.lower),
            fmt_bound(p.upper),
            p.description
        );
    }
    let _ = writeln!(s, "\nEquation\n{}", info.equation);
    s
}

/// Parameter values resolved against a model: every parameter present, in
/// the model's declared order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<f64>,
}

impl ParamSet {
    /// Value of a declared parameter. Panics on an undeclared name, which is a
    /// bug in the model implementation.
    pub fn get(&self, name: &str) -> f64 {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("parameter '{name}' not declared"));
        self.values[i]
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.names
            .iter()
            .cloned()
            .zip(self.values.iter().copied())
            .collect()
    }
}

/// A form factor. Implementations return the particle term in cm⁻¹ without
/// `scale` and `background`, which the registry applies.
pub trait ScatteringModel: Send + Sync {
    fn info(&self) -> &ModelInfo;
    fn form_intensity(&self, q: &[f64], params: &ParamSet) -> Vec<f64>;
}

/// Strictly ascending, positive q values in Å⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct QGrid(Vec<f64>);

impl QGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, ModelError> {
        let ok = !points.is_empty()
            && points.iter().all(|&q| q > 0.0 && q.is_finite())
            && points.windows(2).all(|w| w[1] > w[0]);
        if ok {
            Ok(Self(points))
        } else {
            Err(ModelError::InvalidQGrid)
        }
    }

    /// `n` log-spaced points from `qmin` to `qmax`, endpoints exact.
    pub fn log_spaced(qmin: f64, qmax: f64, n: usize) -> Result<Self, ModelError> {
        let valid = qmin > 0.0 && qmax.is_finite() && qmin < qmax && n >= 2;
        if !valid {
            return Err(ModelError::InvalidRange { qmin, qmax, n });
        }
        let a = qmin.log10();
        let step = (qmax.log10() - a) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| 10f64.powf(a + step * i as f64)).collect();
        points[0] = qmin;
        points[n - 1] = qmax;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for QGrid {
    fn default() -> Self {
        Self::log_spaced(DEFAULT_QMIN, DEFAULT_QMAX, DEFAULT_QPOINTS).expect("default grid")
    }
}

pub fn default_qgrid(qmin: f64, qmax: f64, n: usize) -> Result<QGrid, ModelError> {
    QGrid::log_spaced(qmin, qmax, n)
}

/// Name-keyed collection of models. Immutable once shared.
#[derive(Clone)]
pub struct ModelRegistry {
    models: BTreeMap<String, Arc<dyn ScatteringModel>>,
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRegistry")
            .field("models", &self.models.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            models: BTreeMap::new(),
        }
    }

    /// Sphere, cylinder, ellipsoid and lamellar.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        for model in [
            Arc::new(Sphere::new()) as Arc<dyn ScatteringModel>,
            Arc::new(Cylinder::new()),
            Arc::new(Ellipsoid::new()),
            Arc::new(Lamellar::new()),
        ] {
            r.register(model).expect("standard models are valid");
        }
        r
    }

    pub fn register(&mut self, model: Arc<dyn ScatteringModel>) -> Result<(), ModelError> {
        let info = model.info();
        info.validate()?;
        if self.models.contains_key(&info.name) {
            return Err(ModelError::DuplicateModel(info.name.clone()));
        }
        self.models.insert(info.name.clone(), model);
        Ok(())
    }

    /// Alphabetical.
    pub fn list_models(&self) -> Vec<&ModelInfo> {
        self.models.values().map(|m| m.info()).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&dyn ScatteringModel, ModelError> {
        self.models
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| ModelError::UnknownModel(name.to_string()))
    }

    pub fn info(&self, name: &str) -> Result<&ModelInfo, ModelError> {
        self.get(name).map(|m| m.info())
    }

    /// Checks names and bounds and fills defaults.
    pub fn resolve_params(
        &self,
        model: &str,
        params: &BTreeMap<String, f64>,
    ) -> Result<ParamSet, ModelError> {
        let info = self.info(model)?;
        if let Some(unknown) = params.keys().find(|k| info.parameter(k).is_none()) {
            return Err(ModelError::UnknownParameter(unknown.clone()));
        }
        let mut names = Vec::with_capacity(info.parameters.len());
        let mut values = Vec::with_capacity(info.parameters.len());
        for spec in &info.parameters {
            let v = params.get(&spec.name).copied().unwrap_or(spec.default);
            if !v.is_finite() {
                return Err(ModelError::NonFiniteParameter(spec.name.clone()));
            }
            if !spec.contains(v) {
                return Err(ModelError::ParameterOutOfBounds {
                    name: spec.name.clone(),
                    value: v,
                    lower: spec.lower,
                    upper: spec.upper,
                });
            }
            names.push(spec.name.clone());
            values.push(v);
        }
        Ok(ParamSet { names, values })
    }

    /// I(q) in cm⁻¹: `scale · form(q) + background`.
    pub fn evaluate(
        &self,
        model: &str,
        params: &BTreeMap<String, f64>,
        q: &QGrid,
    ) -> Result<Vec<f64>, ModelError> {
        let resolved = self.resolve_params(model, params)?;
        self.evaluate_resolved(model, &resolved, q.points())
    }

    pub(crate) fn evaluate_resolved(
        &self,
        model: &str,
        params: &ParamSet,
        q: &[f64],
    ) -> Result<Vec<f64>, ModelError> {
        let m = self.get(model)?;
        let scale = params.get("scale");
        let background = params.get("background");
        Ok(m.form_intensity(q, params)
            .into_iter()
            .map(|f| scale * f + background)
            .collect())
    }

    /// Synthetic data with multiplicative Gaussian noise:
    /// `I_i = I(q_i)(1 + noise·g_i)`, `dI_i = noise·I(q_i)`.
    pub fn generate_dataset(
        &self,
        model: &str,
        params: &BTreeMap<String, f64>,
        grid: &QGrid,
        noise_fraction: f64,
        seed: u64,
    ) -> Result<Dataset, ModelError> {
        if !(0.0..1.0).contains(&noise_fraction) {
            return Err(ModelError::InvalidNoise(noise_fraction));
        }
        let resolved = self.resolve_params(model, params)?;
        let clean = self.evaluate_resolved(model, &resolved, grid.points())?;
        let source = DatasetSource::Synthetic {
            model: model.to_string(),
            params: resolved.to_map(),
            noise_fraction,
            seed,
        };
        if noise_fraction == 0.0 {
            return Ok(Dataset::new(grid.points().to_vec(), clean, None, source)?);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut intensity = Vec::with_capacity(clean.len());
        let mut sigma = Vec::with_capacity(clean.len());
        for &i in &clean {
            let g: f64 = StandardNormal.sample(&mut rng);
            intensity.push(i * (1.0 + noise_fraction * g));
            // A zero model value would give a zero error bar; floor it at the
            // absolute weighting floor used by the fitter.
            sigma.push((noise_fraction * i.abs()).max(noise_fraction * 1e-6));
        }
        Ok(Dataset::new(
            grid.points().to_vec(),
            intensity,
            Some(sigma),
            source,
        )?)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::standard()
    }
}
