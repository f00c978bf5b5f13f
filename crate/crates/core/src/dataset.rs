use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("column lengths differ: q={q}, I={intensity}, dI={d_intensity:?}")]
    LengthMismatch {
        q: usize,
        intensity: usize,
        d_intensity: Option<usize>,
    },
    #[error("q must be positive and strictly ascending (index {0})")]
    BadQ(usize),
    #[error("non-finite intensity at index {0}")]
    NonFiniteIntensity(usize),
    #[error("uncertainty must be positive at index {0}")]
    BadUncertainty(usize),
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        model: String,
        params: BTreeMap<String, f64>,
        noise_fraction: f64,
        seed: u64,
    },
    File {
        name: String,
    },
    Unspecified,
}

/// Columnar scattering data: q in Å⁻¹, I and dI in cm⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    q: Vec<f64>,
    intensity: Vec<f64>,
    d_intensity: Option<Vec<f64>>,
    pub source: DatasetSource,
}

impl Dataset {
    pub fn new(
        q: Vec<f64>,
        intensity: Vec<f64>,
        d_intensity: Option<Vec<f64>>,
        source: DatasetSource,
    ) -> Result<Self, DatasetError> {
        if q.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mismatch =
            intensity.len() != q.len() || d_intensity.as_ref().is_some_and(|d| d.len() != q.len());
        if mismatch {
            return Err(DatasetError::LengthMismatch {
                q: q.len(),
                intensity: intensity.len(),
                d_intensity: d_intensity.as_ref().map(Vec::len),
            });
        }
        for (i, &v) in q.iter().enumerate() {
            let ascending = i == 0 || v > q[i - 1];
            if !(v > 0.0 && v.is_finite() && ascending) {
                return Err(DatasetError::BadQ(i));
            }
        }
        if let Some(i) = intensity.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFiniteIntensity(i));
        }
        if let Some(d) = &d_intensity {
            if let Some(i) = d.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(DatasetError::BadUncertainty(i));
            }
        }
        Ok(Self {
            q,
            intensity,
            d_intensity,
            source,
        })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn d_intensity(&self) -> Option<&[f64]> {
        self.d_intensity.as_deref()
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    /// Always false for a constructed dataset; kept for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q_range(&self) -> (f64, f64) {
        (self.q[0], self.q[self.q.len() - 1])
    }

    pub fn with_source(mut self, source: DatasetSource) -> Self {
        self.source = source;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_invariants() {
        let ok = Dataset::new(
            vec![0.1, 0.2],
            vec![1.0, 2.0],
            Some(vec![0.1, 0.1]),
            DatasetSource::Unspecified,
        );
        assert!(ok.is_ok());
        assert_eq!(
            Dataset::new(vec![], vec![], None, DatasetSource::Unspecified),
            Err(DatasetError::Empty)
        );
        assert!(matches!(
            Dataset::new(vec![0.1, 0.2], vec![1.0], None, DatasetSource::Unspecified),
            Err(DatasetError::LengthMismatch { .. })
        ));
        assert_eq!(
            Dataset::new(
                vec![0.2, 0.1],
                vec![1.0, 1.0],
                None,
                DatasetSource::Unspecified
            ),
            Err(DatasetError::BadQ(1))
        );
        assert_eq!(
            Dataset::new(
                vec![0.0, 0.1],
                vec![1.0, 1.0],
                None,
                DatasetSource::Unspecified
            ),
            Err(DatasetError::BadQ(0))
        );
        assert_eq!(
            Dataset::new(
                vec![0.1, 0.2],
                vec![1.0, 1.0],
                Some(vec![1.0, 0.0]),
                DatasetSource::Unspecified
            ),
            Err(DatasetError::BadUncertainty(1))
        );
    }
}
