//! Plot artifacts are data documents; rendering is left to the consumer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Dataset;

pub const Q_LABEL: &str = "q (1/Å)";
pub const I_LABEL: &str = "I(q) (1/cm)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Curve,
    Points,
    /// Normalized residuals, drawn on a linear y axis.
    Residuals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub label: String,
    pub kind: SeriesKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yerr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotArtifact {
    pub plot_id: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_log: bool,
    pub y_log: bool,
    pub series: Vec<PlotSeries>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("plot has no series")]
    NoSeries,
    #[error("series '{0}': x and y lengths differ")]
    LengthMismatch(String),
    #[error("series '{0}': x is not ascending")]
    NotAscending(String),
    #[error("series '{0}': yerr length differs from y")]
    ErrorBarMismatch(String),
}

impl PlotArtifact {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            plot_id: new_plot_id(),
            title: title.into(),
            x_label: Q_LABEL.to_string(),
            y_label: I_LABEL.to_string(),
            x_log: true,
            y_log: true,
            series: Vec::new(),
        }
    }

    pub fn with_series(mut self, series: PlotSeries) -> Self {
        self.series.push(series);
        self
    }

    pub fn validate(&self) -> Result<(), PlotError> {
        if self.series.is_empty() {
            return Err(PlotError::NoSeries);
        }
        for s in &self.series {
            if s.x.len() != s.y.len() {
                return Err(PlotError::LengthMismatch(s.label.clone()));
            }
            if s.x.windows(2).any(|w| w[1] < w[0]) {
                return Err(PlotError::NotAscending(s.label.clone()));
            }
            if s.yerr.as_ref().is_some_and(|e| e.len() != s.y.len()) {
                return Err(PlotError::ErrorBarMismatch(s.label.clone()));
            }
        }
        Ok(())
    }

    pub fn has_residuals(&self) -> bool {
        self.series.iter().any(|s| s.kind == SeriesKind::Residuals)
    }
}

impl PlotSeries {
    pub fn curve(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            kind: SeriesKind::Curve,
            x,
            y,
            yerr: None,
        }
    }

    pub fn points(label: impl Into<String>, data: &Dataset) -> Self {
        Self {
            label: label.into(),
            kind: SeriesKind::Points,
            x: data.q().to_vec(),
            y: data.intensity().to_vec(),
            yerr: data.d_intensity().map(<[f64]>::to_vec),
        }
    }

    pub fn residuals(label: impl Into<String>, x: Vec<f64>, r: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            kind: SeriesKind::Residuals,
            x,
            y: r,
            yerr: None,
        }
    }
}

pub fn new_plot_id() -> String {
    format!("plot-{}", uuid::Uuid::new_v4().simple())
}
