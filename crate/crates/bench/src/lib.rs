//! Shared inputs for the benchmarks.

use std::collections::BTreeMap;
use std::sync::Arc;

use saskit_core::fit::FitProblem;
use saskit_core::models::{ModelRegistry, QGrid};
use saskit_core::Dataset;

pub fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Sphere data with r = 80 Å, 1% noise, seed 7, 100 points over [0.005, 0.3].
pub fn sphere_dataset(registry: &ModelRegistry) -> Dataset {
    let grid = QGrid::log_spaced(0.005, 0.3, 100).expect("valid grid");
    registry
        .generate_dataset("sphere", &params(&[("radius", 80.0)]), &grid, 0.01, 7)
        .expect("sphere data")
}

/// Radius, scale and background free from a radius start of 60 Å.
pub fn sphere_problem(registry: Arc<ModelRegistry>) -> FitProblem {
    let data = sphere_dataset(&registry);
    FitProblem::builder(registry, "sphere", data)
        .fix("sld", 1.0)
        .fix("sld_solvent", 6.0)
        .initial("radius", 60.0)
        .build()
        .expect("valid problem")
}
