use std::collections::HashMap;
use std::sync::OnceLock;

use super::SldError;

const BUNDLED_TABLE: &str = include_str!("../../data/elements.txt");

/// One row of the element data file.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementRecord {
    pub symbol: String,
    pub atomic_number: u32,
    /// g/mol
    pub atomic_mass: f64,
    /// Bound coherent scattering length, fm.
    pub b_coh: f64,
    /// Absorption cross-section at 2200 m/s, barn.
    pub sigma_abs_2200: f64,
}

/// Element lookup table keyed by symbol.
#[derive(Debug, Clone)]
pub struct ElementTable {
    records: Vec<ElementRecord>,
    by_symbol: HashMap<String, usize>,
}

impl ElementTable {
    /// Parses the `SYMBOL Z MASS B_COH SIGMA_ABS` line format. `#` starts a
    /// comment line; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, SldError> {
        let mut records = Vec::new();
        let mut by_symbol = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |why: &str| SldError::TableFormat {
                line: lineno + 1,
                message: why.to_string(),
            };
            if fields.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let atomic_number: u32 = fields[1].parse().map_err(|_| bad("bad Z"))?;
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let record = ElementRecord {
                symbol: fields[0].to_string(),
                atomic_number,
                atomic_mass: num(fields[2], "bad mass")?,
                b_coh: num(fields[3], "bad b_coh")?,
                sigma_abs_2200: num(fields[4], "bad sigma_abs")?,
            };
            if record.atomic_number < 1 {
                return Err(bad("Z must be >= 1"));
            }
            if record.atomic_mass <= 0.0 || record.atomic_mass.is_nan() {
                return Err(bad("mass must be positive"));
            }
            if record.sigma_abs_2200 < 0.0 {
                return Err(bad("absorption cross-section must be non-negative"));
            }
            if by_symbol
                .insert(record.symbol.clone(), records.len())
                .is_some()
            {
                return Err(bad("duplicate symbol"));
            }
            records.push(record);
        }
        Ok(Self { records, by_symbol })
    }

    /// The compiled-in table.
    pub fn bundled() -> &'static ElementTable {
        static TABLE: OnceLock<ElementTable> = OnceLock::new();
        TABLE.get_or_init(|| ElementTable::parse(BUNDLED_TABLE).expect("bundled element table"))
    }

    pub fn get(&self, symbol: &str) -> Option<&ElementRecord> {
        self.by_symbol.get(symbol).map(|&i| &self.records[i])
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.by_symbol.contains_key(symbol)
    }

    pub fn records(&self) -> &[ElementRecord] {
        &self.records
    }
}
