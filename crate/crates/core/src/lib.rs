//! Core numerics and orchestration for small-angle scattering analysis.
//!
//! The crate is organised by tool:
//!
//! * [`sld`] parses chemical formulas and computes neutron and X-ray
//!   scattering length densities.
//! * [`models`] holds the form-factor registry and synthetic data generation.
//! * [`dataio`] reads and writes columnar ASCII scattering data.
//! * [`fit`] is a bounded Levenberg-Marquardt fitter with uncertainties.
//! * [`docstore`] ranks model documentation with BM25.
//! * [`agent`] routes prompts to expert agents that call the tools above.

pub mod agent;
pub mod dataio;
pub mod dataset;
pub mod docstore;
pub mod fit;
pub mod models;
pub mod plot;
pub mod sld;

pub use dataset::Dataset;
pub use plot::{PlotArtifact, PlotSeries, SeriesKind};
