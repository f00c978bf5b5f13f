use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::table::ElementTable;
use super::SldError;

/// A parsed chemical formula: symbol to (possibly fractional) count, in order
/// of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    entries: IndexMap<String, f64>,
}

impl Composition {
    /// Builds a composition from explicit entries, checking every invariant
    /// against the bundled table.
    pub fn from_entries<I, S>(entries: I) -> Result<Self, SldError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let table = ElementTable::bundled();
        let mut map: IndexMap<String, f64> = IndexMap::new();
        for (i, (sym, count)) in entries.into_iter().enumerate() {
            let sym = sym.into();
            if !table.contains(&sym) {
                return Err(SldError::UnknownElement(sym));
            }
            if count <= 0.0 || !count.is_finite() {
                return Err(SldError::ZeroCount(i));
            }
            *map.entry(sym).or_insert(0.0) += count;
        }
        if map.is_empty() {
            return Err(SldError::EmptyFormula);
        }
        Ok(Self { entries: map })
    }

    pub fn entries(&self) -> &IndexMap<String, f64> {
        &self.entries
    }

    pub fn count(&self, symbol: &str) -> Option<f64> {
        self.entries.get(symbol).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Multiplies every count by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
        }
    }
}

/// Canonical text: symbols in stored order, count omitted when it is 1.
impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (sym, &count) in &self.entries {
            f.write_str(sym)?;
            if count != 1.0 {
                write!(f, "{count}")?;
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for Composition {
    type Err = SldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Parses a formula such as `C4H8O`, `Ca(OH)2`, `D2O`, `H[2]2O` or `C2.5H6`.
///
/// Grammar: `(Element Count? | '(' formula ')' Count?)*` where `Element` is an
/// uppercase letter followed by lowercase letters, optionally with a
/// `[mass]` suffix. `H[2]` and `H[3]` are stored as `D` and `T`.
pub fn parse_formula(text: &str) -> Result<Composition, SldError> {
    let table = ElementTable::bundled();
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
        table,
    };
    let mut stack: Vec<(usize, Vec<(String, f64)>)> = vec![(0, Vec::new())];

    parser.skip_ws();
    if parser.at_end() {
        return Err(SldError::EmptyFormula);
    }

    while !parser.at_end() {
        let c = parser.peek();
        match c {
            b'(' => {
                stack.push((parser.pos, Vec::new()));
                parser.pos += 1;
            }
            b')' => {
                let close = parser.pos;
                if stack.len() < 2 {
                    return Err(SldError::UnbalancedParenthesis(close));
                }
                parser.pos += 1;
                let (_, group) = stack.pop().expect("group");
                if group.is_empty() {
                    return Err(SldError::EmptyGroup(close));
                }
                let mult = parser.count()?.unwrap_or(1.0);
                let parent = &mut stack.last_mut().expect("parent").1;
                parent.extend(group.into_iter().map(|(s, n)| (s, n * mult)));
            }
            b'A'..=b'Z' => {
                let sym = parser.element()?;
                let n = parser.count()?.unwrap_or(1.0);
                stack.last_mut().expect("frame").1.push((sym, n));
            }
            _ => return Err(SldError::UnexpectedCharacter(parser.pos)),
        }
        parser.skip_ws();
    }

    if stack.len() > 1 {
        let (open, _) = stack.last().expect("frame");
        return Err(SldError::UnbalancedParenthesis(*open));
    }
    let (_, flat) = stack.pop().expect("root");
    let mut entries: IndexMap<String, f64> = IndexMap::new();
    for (sym, n) in flat {
        *entries.entry(sym).or_insert(0.0) += n;
    }
    Ok(Composition { entries })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    table: &'a ElementTable,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> u8 {
        self.src[self.pos]
    }

    fn skip_ws(&mut self) {
        while !self.at_end() && self.peek().is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn text(&self, start: usize, end: usize) -> String {
        String::from_utf8_lossy(&self.src[start..end]).into_owned()
    }

    fn element(&mut self) -> Result<String, SldError> {
        let start = self.pos;
        self.pos += 1;
        while !self.at_end() && self.peek().is_ascii_lowercase() {
            self.pos += 1;
        }
        let base = self.text(start, self.pos);
        if !self.at_end() && self.peek() == b'[' {
            let open = self.pos;
            self.pos += 1;
            let digits_start = self.pos;
            while !self.at_end() && self.peek().is_ascii_digit() {
                self.pos += 1;
            }
            if self.at_end() || self.peek() != b']' || self.pos == digits_start {
                return Err(SldError::MalformedIsotope(open));
            }
            let mass = self.text(digits_start, self.pos);
            self.pos += 1;
            let symbol = match (base.as_str(), mass.as_str()) {
                ("H", "1") => "H".to_string(),
                ("H", "2") => "D".to_string(),
                ("H", "3") => "T".to_string(),
                _ => format!("{base}[{mass}]"),
            };
            if !self.table.contains(&symbol) {
                return Err(SldError::UnknownElement(symbol));
            }
            return Ok(symbol);
        }
        if !self.table.contains(&base) {
            return Err(SldError::UnknownElement(base));
        }
        Ok(base)
    }

    /// Optional decimal count after an element or group.
    fn count(&mut self) -> Result<Option<f64>, SldError> {
        let start = self.pos;
        while !self.at_end() && (self.peek().is_ascii_digit() || self.peek() == b'.') {
            self.pos += 1;
        }
        if self.pos == start {
            return Ok(None);
        }
        let text = self.text(start, self.pos);
        let value: f64 = text.parse().map_err(|_| SldError::MalformedCount(start))?;
        if value == 0.0 {
            return Err(SldError::ZeroCount(start));
        }
        Ok(Some(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(pairs: &[(&str, f64)]) -> Composition {
        Composition::from_entries(pairs.iter().map(|&(s, n)| (s, n))).unwrap()
    }

    #[test]
    fn simple_formula() {
        assert_eq!(
            parse_formula("C4H8O").unwrap(),
            comp(&[("C", 4.0), ("H", 8.0), ("O", 1.0)])
        );
    }

    #[test]
    fn group_multiplies_through() {
        let c = parse_formula("Ca(OH)2").unwrap();
        assert_eq!(c, comp(&[("Ca", 1.0), ("O", 2.0), ("H", 2.0)]));
        let order: Vec<_> = c.iter().map(|(s, _)| s).collect();
        assert_eq!(order, ["Ca", "O", "H"]);
    }

    #[test]
    fn nested_groups_and_repeats() {
        let c = parse_formula("CH3(CH2(CH2)2)3CH3").unwrap();
        assert_eq!(c, comp(&[("C", 11.0), ("H", 24.0)]));
    }

    #[test]
    fn isotopes() {
        assert_eq!(
            parse_formula("D2O").unwrap(),
            comp(&[("D", 2.0), ("O", 1.0)])
        );
        assert_eq!(
            parse_formula("H[2]2O").unwrap(),
            comp(&[("D", 2.0), ("O", 1.0)])
        );
        assert_eq!(parse_formula("B[10]").unwrap(), comp(&[("B[10]", 1.0)]));
        assert!(matches!(
            parse_formula("O[99]"),
            Err(SldError::UnknownElement(s)) if s == "O[99]"
        ));
        assert!(matches!(
            parse_formula("H[]2"),
            Err(SldError::MalformedIsotope(1))
        ));
    }

    #[test]
    fn fractional_counts() {
        let c = parse_formula("H1.5D0.5O").unwrap();
        assert_eq!(c, comp(&[("H", 1.5), ("D", 0.5), ("O", 1.0)]));
    }

    #[test]
    fn unknown_element() {
        assert!(matches!(
            parse_formula("C4H8Q"),
            Err(SldError::UnknownElement(s)) if s == "Q"
        ));
        // Greedy lowercase: "Xx" is one (unknown) symbol.
        assert!(matches!(
            parse_formula("Xx2"),
            Err(SldError::UnknownElement(s)) if s == "Xx"
        ));
    }

    #[test]
    fn error_positions() {
        assert!(matches!(
            parse_formula("Ca(OH2"),
            Err(SldError::UnbalancedParenthesis(2))
        ));
        assert!(matches!(
            parse_formula("CaOH)2"),
            Err(SldError::UnbalancedParenthesis(4))
        ));
        assert!(matches!(parse_formula("H0O"), Err(SldError::ZeroCount(1))));
        assert!(matches!(
            parse_formula("(OH)0"),
            Err(SldError::ZeroCount(4))
        ));
        assert!(matches!(
            parse_formula("H2-O"),
            Err(SldError::UnexpectedCharacter(2))
        ));
        assert!(matches!(parse_formula("C()"), Err(SldError::EmptyGroup(2))));
    }

    #[test]
    fn empty() {
        assert!(matches!(parse_formula(""), Err(SldError::EmptyFormula)));
        assert!(matches!(parse_formula("   "), Err(SldError::EmptyFormula)));
    }

    #[test]
    fn whitespace_is_ignored() {
        assert_eq!(
            parse_formula(" C2 H6 O ").unwrap(),
            parse_formula("C2H6O").unwrap()
        );
    }

    #[test]
    fn canonical_text() {
        assert_eq!(parse_formula("Ca(OH)2").unwrap().to_string(), "CaO2H2");
        assert_eq!(parse_formula("H1.5D0.5O").unwrap().to_string(), "H1.5D0.5O");
    }
}
