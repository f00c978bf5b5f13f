use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FitProblem, FitResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
    pub units: String,
}

/// Human- and machine-readable fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub points: usize,
    pub free: Vec<ReportEntry>,
    pub fixed: Vec<ReportEntry>,
    pub chi2_reduced: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn new(p: &FitProblem, result: &FitResult) -> Self {
        let units = |name: &str| {
            p.registry()
                .info(p.model())
                .ok()
                .and_then(|i| i.parameter(name))
                .map(|s| s.units.clone())
                .unwrap_or_default()
        };
        let entry = |name: &str, value: f64, uncertainty: Option<f64>| ReportEntry {
            name: name.to_string(),
            value,
            uncertainty,
            units: units(name),
        };
        let free = p
            .free_parameters()
            .map(|q| {
                entry(
                    &q.name,
                    result.values[&q.name],
                    result.uncertainties.get(&q.name).copied(),
                )
            })
            .collect();
        let fixed = p
            .parameters()
            .iter()
            .filter(|q| q.fixed)
            .map(|q| entry(&q.name, q.value, None))
            .collect();
        Self {
            model: result.model.clone(),
            points: result.residuals.len(),
            free,
            fixed,
            chi2_reduced: result.chi2_reduced,
            iterations: result.iterations,
            converged: result.converged,
        }
    }
}

pub fn fit_report(p: &FitProblem, result: &FitResult) -> FitReport {
    FitReport::new(p, result)
}

fn unit_suffix(units: &str) -> String {
    if units.is_empty() {
        String::new()
    } else {
        format!(" {units}")
    }
}

impl fmt::Display for FitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model: {}", self.model)?;
        writeln!(f, "points: {}", self.points)?;
        writeln!(f, "fitted:")?;
        for e in &self.free {
            match e.uncertainty {
                Some(u) => writeln!(
                    f,
                    "  {} = {:.6e} ± {:.3e}{}",
                    e.name,
                    e.value,
                    u,
                    unit_suffix(&e.units)
                )?,
                None => writeln!(f, "  {} = {:.6e}{}", e.name, e.value, unit_suffix(&e.units))?,
            }
        }
        if !self.fixed.is_empty() {
            writeln!(f, "fixed:")?;
            for e in &self.fixed {
                writeln!(f, "  {} = {:.6e}{}", e.name, e.value, unit_suffix(&e.units))?;
            }
        }
        writeln!(f, "reduced chi2: {:.4}", self.chi2_reduced)?;
        if self.converged {
            write!(f, "status: converged after {} iterations", self.iterations)
        } else {
            write!(
                f,
                "status: NOT CONVERGED (stopped after {} iterations)",
                self.iterations
            )
        }
    }
}
