//! Scattering length density calculator.
//!
//! Units: densities in g/cm³, SLDs in 1e-6 Å⁻², molecular volumes in Å³.
//! The imaginary neutron SLD uses the 1/v absorption law evaluated at the
//! 2200 m/s reference wavelength, so it does not depend on the instrument
//! wavelength. X-ray SLDs count electrons only (no anomalous dispersion).

mod formula;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use formula::{parse_formula, Composition};
pub use table::{ElementRecord, ElementTable};

/// Avogadro constant, 1/mol.
pub const AVOGADRO: f64 = 6.022_140_76e23;
/// Classical electron radius, fm.
pub const ELECTRON_RADIUS_FM: f64 = 2.817_940_3;
/// Neutron wavelength at 2200 m/s, Å.
pub const WAVELENGTH_2200: f64 = 1.798;

// cm⁻² → 1e-6 Å⁻²
const CM2_TO_SLD_UNITS: f64 = 1e-16 / 1e-6;
const FM_TO_CM: f64 = 1e-13;
const BARN_TO_CM2: f64 = 1e-24;
const ANGSTROM_TO_CM: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SldError {
    #[error("unknown element '{0}'")]
    UnknownElement(String),
    #[error("unbalanced parenthesis at position {0}")]
    UnbalancedParenthesis(usize),
    #[error("zero count at position {0}")]
    ZeroCount(usize),
    #[error("empty formula")]
    EmptyFormula,
    #[error("empty group at position {0}")]
    EmptyGroup(usize),
    #[error("malformed isotope at position {0}")]
    MalformedIsotope(usize),
    #[error("malformed count at position {0}")]
    MalformedCount(usize),
    #[error("unexpected character at position {0}")]
    UnexpectedCharacter(usize),
    #[error("density must be positive, got {0}")]
    NonPositiveDensity(f64),
    #[error("element table line {line}: {message}")]
    TableFormat { line: usize, message: String },
}

/// Everything the SLD tool reports for one material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SldResult {
    pub formula: String,
    pub density: f64,
    /// 1e-6 Å⁻²
    pub sld_real: f64,
    /// 1e-6 Å⁻²
    pub sld_imag: f64,
    /// 1e-6 Å⁻²
    pub sld_xray: f64,
    /// g/mol
    pub molar_mass: f64,
    /// formula units per cm³
    pub number_density: f64,
    /// Å³ per formula unit
    pub molecular_volume: f64,
}

fn record(symbol: &str) -> &'static ElementRecord {
    // Compositions only hold symbols validated against the bundled table.
    ElementTable::bundled()
        .get(symbol)
        .expect("composition symbol resolves in the element table")
}

fn check_density(density: f64) -> Result<(), SldError> {
    if density > 0.0 && density.is_finite() {
        Ok(())
    } else {
        Err(SldError::NonPositiveDensity(density))
    }
}

/// Σ count · atomic mass, g/mol.
pub fn molar_mass(c: &Composition) -> f64 {
    c.iter().map(|(s, n)| n * record(s).atomic_mass).sum()
}

/// Formula units per cm³.
pub fn number_density(c: &Composition, density: f64) -> Result<f64, SldError> {
    check_density(density)?;
    Ok(density * AVOGADRO / molar_mass(c))
}

/// Real and imaginary neutron SLD in 1e-6 Å⁻².
pub fn neutron_sld(c: &Composition, density: f64) -> Result<(f64, f64), SldError> {
    let n = number_density(c, density)?;
    let b_sum: f64 = c.iter().map(|(s, k)| k * record(s).b_coh).sum();
    let lambda_cm = WAVELENGTH_2200 * ANGSTROM_TO_CM;
    let b_abs: f64 = c
        .iter()
        .map(|(s, k)| k * record(s).sigma_abs_2200 * BARN_TO_CM2 / (2.0 * lambda_cm))
        .sum();
    let real = n * b_sum * FM_TO_CM * CM2_TO_SLD_UNITS;
    let imag = n * b_abs * CM2_TO_SLD_UNITS;
    Ok((real, imag))
}

/// X-ray SLD in 1e-6 Å⁻² from the electron count.
pub fn xray_sld(c: &Composition, density: f64) -> Result<f64, SldError> {
    let n = number_density(c, density)?;
    let electrons: f64 = c
        .iter()
        .map(|(s, k)| k * record(s).atomic_number as f64)
        .sum();
    Ok(n * ELECTRON_RADIUS_FM * FM_TO_CM * electrons * CM2_TO_SLD_UNITS)
}

pub fn sld_for(c: &Composition, density: f64) -> Result<SldResult, SldError> {
    let (sld_real, sld_imag) = neutron_sld(c, density)?;
    let sld_xray = xray_sld(c, density)?;
    let molar_mass = molar_mass(c);
    Ok(SldResult {
        formula: c.to_string(),
        density,
        sld_real,
        sld_imag,
        sld_xray,
        molar_mass,
        number_density: density * AVOGADRO / molar_mass,
        molecular_volume: molar_mass / (density * AVOGADRO) * 1e24,
    })
}

/// Parse `formula` and compute the full report.
pub fn sld_report(formula: &str, density: f64) -> Result<SldResult, SldError> {
    let c = parse_formula(formula)?;
    sld_for(&c, density)
}
