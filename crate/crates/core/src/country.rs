//! Country codes, continents and the bundled country → continent table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_CONTINENTS: &str = include_str!("../data/continents.csv");

/// ISO-3166-1 alpha-2 code, stored uppercase.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn new(code: &str) -> Result<Self> {
        let b = code.trim().as_bytes();
        if b.len() != 2 || !b.iter().all(u8::is_ascii_alphabetic) {
            return Err(Error::UnknownCountry(code.to_owned()));
        }
        Ok(CountryCode([b[0].to_ascii_uppercase(), b[1].to_ascii_uppercase()]))
    }

    pub fn as_str(&self) -> &str {
        // always two ASCII letters
        std::str::from_utf8(&self.0).unwrap()
    }
}

impl FromStr for CountryCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CountryCode::new(s)
    }
}

impl TryFrom<String> for CountryCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        CountryCode::new(&s)
    }
}

impl From<CountryCode> for String {
    fn from(c: CountryCode) -> String {
        c.as_str().to_owned()
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CountryCode({})", self.as_str())
    }
}

/// The six inhabited continents, declared in report column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Continent {
    NorthAmerica,
    SouthAmerica,
    Europe,
    Africa,
    Asia,
    Oceania,
}

impl Continent {
    pub const ALL: [Continent; 6] = [
        Continent::NorthAmerica,
        Continent::SouthAmerica,
        Continent::Europe,
        Continent::Africa,
        Continent::Asia,
        Continent::Oceania,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Continent::NorthAmerica => "NorthAmerica",
            Continent::SouthAmerica => "SouthAmerica",
            Continent::Europe => "Europe",
            Continent::Africa => "Africa",
            Continent::Asia => "Asia",
            Continent::Oceania => "Oceania",
        }
    }

    /// Column label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Continent::NorthAmerica => "N.America",
            Continent::SouthAmerica => "S.America",
            Continent::Europe => "Europe",
            Continent::Africa => "Africa",
            Continent::Asia => "Asia",
            Continent::Oceania => "Oceania",
        }
    }
}

impl fmt::Display for Continent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Continent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Continent::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::domain(format!("unknown continent `{s}`")))
    }
}

/// Where a country code lands in the continent table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Continent(Continent),
    Antarctica,
}

/// Static ISO alpha-2 → continent mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinentTable {
    version: String,
    regions: BTreeMap<CountryCode, Region>,
}

impl ContinentTable {
    /// The table shipped with the crate.
    pub fn bundled() -> &'static ContinentTable {
        static TABLE: OnceLock<ContinentTable> = OnceLock::new();
        TABLE.get_or_init(|| ContinentTable::parse(BUNDLED_CONTINENTS).expect("bundled continent table is valid"))
    }

    /// Parses `iso_a2,continent` lines. `#` lines are comments; a leading
    /// `# version X;` comment sets the table version.
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = String::from("unversioned");
        let mut regions = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(rest) = comment.trim().strip_prefix("version ") {
                    version = rest.split(';').next().unwrap_or(rest).trim().to_owned();
                }
                continue;
            }
            if line.is_empty() || line == "iso_a2,continent" {
                continue;
            }
            let (code, cont) = line
                .split_once(',')
                .ok_or_else(|| Error::format(line_no, "expected `iso_a2,continent`"))?;
            let code = CountryCode::new(code).map_err(|e| Error::format(line_no, e.to_string()))?;
            let region = if cont.trim().eq_ignore_ascii_case("antarctica") {
                Region::Antarctica
            } else {
                Region::Continent(cont.parse().map_err(|e: Error| Error::format(line_no, e.to_string()))?)
            };
            regions.insert(code, region);
        }
        Ok(ContinentTable { version, regions })
    }

    pub fn region(&self, code: CountryCode) -> Option<Region> {
        self.regions.get(&code).copied()
    }

    pub fn continent(&self, code: CountryCode) -> Option<Continent> {
        match self.region(code)? {
            Region::Continent(c) => Some(c),
            Region::Antarctica => None,
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    #[test]
    fn country_code_normalizes_case() {
        assert_eq!(cc("fr").as_str(), "FR");
        assert!(CountryCode::new("FRA").is_err());
        assert!(CountryCode::new("F1").is_err());
    }

    #[test]
    fn bundled_table_transcontinental_by_seat_of_government() {
        let t = ContinentTable::bundled();
        assert_eq!(t.continent(cc("RU")), Some(Continent::Europe));
        assert_eq!(t.continent(cc("TR")), Some(Continent::Asia));
        assert_eq!(t.continent(cc("FR")), Some(Continent::Europe));
        assert_eq!(t.continent(cc("BF")), Some(Continent::Africa));
        assert_eq!(t.continent(cc("MX")), Some(Continent::NorthAmerica));
        assert_eq!(t.continent(cc("AU")), Some(Continent::Oceania));
        assert_eq!(t.region(cc("AQ")), Some(Region::Antarctica));
        assert_eq!(t.region(cc("XK")), Some(Region::Continent(Continent::Europe)));
        assert_eq!(t.version(), "2024.1");
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = ContinentTable::parse("iso_a2,continent\nFR,Atlantis\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn continents_sort_in_report_order() {
        let mut v = vec![Continent::Oceania, Continent::Europe, Continent::NorthAmerica];
        v.sort();
        assert_eq!(v, vec![Continent::NorthAmerica, Continent::Europe, Continent::Oceania]);
    }
}
