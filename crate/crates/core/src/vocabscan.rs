//! Model vocabulary parsing and city-name coverage.
//!
//! Vocabulary entries are reduced to whole-word tokens before matching:
//!
//! * WordPiece continuations (`##ris`) are dropped,
//! * byte-BPE (`Ġ`) and SentencePiece (`▁`) word-start markers are stripped
//!   and the remainder kept,
//! * unmarked entries are kept as-is. In a vocabulary that uses word-start
//!   markers these are usually word-internal pieces, so they are tracked and
//!   any city matched through one is flagged in the coverage report.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::country::{Continent, CountryCode};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::gazetteer::City;

const CONTINUATION_PREFIX: &str = "##";
const WORD_START_MARKERS: [char; 2] = ['Ġ', '▁'];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabFormat {
    #[default]
    TokenPerLine,
    TokenIdMap,
}

impl std::str::FromStr for VocabFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "token_per_line" => Ok(VocabFormat::TokenPerLine),
            "token_id_map" => Ok(VocabFormat::TokenIdMap),
            _ => Err(Error::domain(format!("unknown vocabulary format `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Casing {
    Cased,
    #[default]
    Uncased,
}

impl std::str::FromStr for Casing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cased" => Ok(Casing::Cased),
            "uncased" => Ok(Casing::Uncased),
            _ => Err(Error::domain(format!("unknown casing `{s}`"))),
        }
    }
}

impl fmt::Display for Casing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Casing::Cased => "cased",
            Casing::Uncased => "uncased",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub model_id: String,
    pub casing: Casing,
    tokens: HashSet<String>,
    /// Tokens that carried no marker in a vocabulary that uses word-start markers.
    unmarked: HashSet<String>,
    raw_size: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from raw entries in file order.
    pub fn from_entries<I, S>(model_id: &str, casing: Casing, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let raw: Vec<S> = entries.into_iter().collect();
        let uses_markers = raw.iter().any(|e| e.as_ref().starts_with(WORD_START_MARKERS));
        let mut tokens = HashSet::with_capacity(raw.len());
        let mut marked = HashSet::new();
        let mut unmarked = HashSet::new();
        for entry in &raw {
            let entry = entry.as_ref();
            if entry.starts_with(CONTINUATION_PREFIX) && entry.len() > CONTINUATION_PREFIX.len() {
                continue;
            }
            let stripped = entry.trim_start_matches(WORD_START_MARKERS);
            if stripped.is_empty() {
                continue;
            }
            let token = match casing {
                Casing::Uncased => stripped.to_lowercase(),
                Casing::Cased => stripped.to_owned(),
            };
            if uses_markers {
                if stripped.len() != entry.len() {
                    marked.insert(token.clone());
                } else {
                    unmarked.insert(token.clone());
                }
            }
            tokens.insert(token);
        }
        unmarked.retain(|t| !marked.contains(t));
        if tokens.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Vocabulary {
            model_id: model_id.to_owned(),
            casing,
            tokens,
            unmarked,
            raw_size: raw.len(),
        })
    }

    pub fn raw_size(&self) -> usize {
        self.raw_size
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    /// Key a city name is looked up under.
    pub fn match_key(&self, name: &str) -> String {
        match self.casing {
            Casing::Uncased => name.to_lowercase(),
            Casing::Cased => name.to_owned(),
        }
    }

    /// Adds a token, returning whether it was new. Intended for building
    /// fixtures and monotonicity checks.
    pub fn insert(&mut self, token: &str) -> bool {
        let key = self.match_key(token);
        self.unmarked.remove(&key);
        self.tokens.insert(key)
    }
}

/// Token → id JSON object, keeping the tokens in id order.
struct TokenIdMap(Vec<(u64, String)>);

impl<'de> Deserialize<'de> for TokenIdMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct MapVisitor;
        impl<'de> Visitor<'de> for MapVisitor {
            type Value = TokenIdMap;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object mapping token strings to integer ids")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<TokenIdMap, A::Error> {
                let mut out = Vec::with_capacity(map.size_hint().unwrap_or(0));
                while let Some((token, id)) = map.next_entry::<String, u64>()? {
                    out.push((id, token));
                }
                Ok(TokenIdMap(out))
            }
        }
        d.deserialize_map(MapVisitor)
    }
}

pub fn load_vocabulary<R: Read>(
    mut source: R,
    format: VocabFormat,
    casing: Casing,
    model_id: &str,
) -> Result<Vocabulary> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    match format {
        VocabFormat::TokenPerLine => {
            let lines: Vec<&str> = text.lines().collect();
            if lines.is_empty() {
                return Err(Error::EmptyVocabulary);
            }
            Vocabulary::from_entries(model_id, casing, lines)
        }
        VocabFormat::TokenIdMap => {
            let TokenIdMap(mut entries) =
                serde_json::from_str(&text).map_err(|e| Error::format(Some(e.line() as u64), e.to_string()))?;
            if entries.is_empty() {
                return Err(Error::EmptyVocabulary);
            }
            entries.sort();
            Vocabulary::from_entries(model_id, casing, entries.into_iter().map(|(_, t)| t))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityMatch {
    pub geoname_id: u64,
    pub country_code: CountryCode,
    pub ascii_name: String,
    pub matched: bool,
    /// Matched only through a token the vocabulary did not mark as word-initial.
    pub via_unmarked_token: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub matched: usize,
    pub total: usize,
}

impl CoverageCell {
    pub fn percentage(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.matched as f64 / self.total as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabCoverage {
    pub model_id: String,
    pub countries: BTreeMap<CountryCode, CoverageCell>,
    /// Pooled ratio within each continent.
    pub continents: BTreeMap<Continent, CoverageCell>,
    /// Unweighted mean of member-country percentages, reported alongside.
    pub continent_country_mean: BTreeMap<Continent, f64>,
    pub cities: Vec<CityMatch>,
}

impl VocabCoverage {
    pub fn continent(&self, c: Continent) -> CoverageCell {
        self.continents.get(&c).copied().unwrap_or_default()
    }
}

/// Matches each city's ascii name against the vocabulary. Cities are
/// expected to be prefiltered to the population floor.
pub fn scan_cities(v: &Vocabulary, cities: &[&City]) -> Result<VocabCoverage> {
    scan_cities_with(v, cities, Execution::default())
}

pub fn scan_cities_with(v: &Vocabulary, cities: &[&City], exec: Execution) -> Result<VocabCoverage> {
    if cities.is_empty() {
        return Err(Error::domain("no cities to scan"));
    }
    let mut ordered: Vec<&City> = cities.to_vec();
    ordered.sort_by_key(|c| c.geoname_id);
    let matches = map_slice(exec, &ordered, |c| {
        let key = v.match_key(&c.ascii_name);
        let matched = v.tokens.contains(&key);
        CityMatch {
            geoname_id: c.geoname_id,
            country_code: c.country_code,
            ascii_name: c.ascii_name.clone(),
            matched,
            via_unmarked_token: matched && v.unmarked.contains(&key),
        }
    });

    let mut countries: BTreeMap<CountryCode, CoverageCell> = BTreeMap::new();
    let mut continent_of: BTreeMap<CountryCode, Continent> = BTreeMap::new();
    for (m, c) in matches.iter().zip(&ordered) {
        let cell = countries.entry(m.country_code).or_default();
        cell.total += 1;
        cell.matched += usize::from(m.matched);
        continent_of.insert(c.country_code, c.continent);
    }
    let mut continents: BTreeMap<Continent, CoverageCell> = BTreeMap::new();
    let mut pct_lists: BTreeMap<Continent, Vec<f64>> = BTreeMap::new();
    for (code, cell) in &countries {
        let k = continent_of[code];
        let agg = continents.entry(k).or_default();
        agg.total += cell.total;
        agg.matched += cell.matched;
        pct_lists.entry(k).or_default().push(cell.percentage().unwrap_or(0.0));
    }
    let continent_country_mean = pct_lists
        .into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    Ok(VocabCoverage {
        model_id: v.model_id.clone(),
        countries,
        continents,
        continent_country_mean,
        cities: matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn city(id: u64, name: &str, code: &str, continent: Continent) -> City {
        City {
            geoname_id: id,
            name: name.into(),
            ascii_name: name.into(),
            country_code: CountryCode::new(code).unwrap(),
            continent,
            latitude: 0.0,
            longitude: 0.0,
            population: 200_000,
            is_capital: false,
        }
    }

    #[test]
    fn wordpiece_continuations_dropped() {
        let v = load_vocabulary(
            "paris\n##ris\nlondon\n".as_bytes(),
            VocabFormat::TokenPerLine,
            Casing::Uncased,
            "m",
        )
        .unwrap();
        assert_eq!(v.raw_size(), 3);
        assert!(v.contains("paris") && v.contains("london"));
        assert!(!v.contains("ris") && !v.contains("##ris"));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn byte_bpe_marker_stripped() {
        let v = load_vocabulary(
            r#"{"Ġparis": 1234, "ing": 7}"#.as_bytes(),
            VocabFormat::TokenIdMap,
            Casing::Cased,
            "m",
        )
        .unwrap();
        assert!(v.contains("paris"));
        assert!(v.contains("ing"));
        assert_eq!(v.raw_size(), 2);
    }

    #[test]
    fn sentencepiece_marker_stripped_and_uncased_lowered() {
        let v = Vocabulary::from_entries("m", Casing::Uncased, ["▁Paris", "▁"]).unwrap();
        assert!(v.contains("paris"));
        assert_eq!(v.raw_size(), 2);
        assert!(v.tokens().all(|t| t == t.to_lowercase()));
    }

    #[test]
    fn malformed_map_entry_reports_line() {
        let text = "{\n  \"a\": 1,\n  \"b\": \"two\"\n}";
        match load_vocabulary(text.as_bytes(), VocabFormat::TokenIdMap, Casing::Cased, "m") {
            Err(Error::Format { line: Some(3), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        for (text, fmt) in [("", VocabFormat::TokenPerLine), ("{}", VocabFormat::TokenIdMap)] {
            assert!(matches!(
                load_vocabulary(text.as_bytes(), fmt, Casing::Cased, "m"),
                Err(Error::EmptyVocabulary)
            ));
        }
        assert!(matches!(
            load_vocabulary("##a\n##b\n".as_bytes(), VocabFormat::TokenPerLine, Casing::Cased, "m"),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn scan_matches_single_token_names() {
        let v = Vocabulary::from_entries("m", Casing::Uncased, ["paris", "london", "new", "york"]).unwrap();
        let cs = [
            city(1, "Paris", "FR", Continent::Europe),
            city(2, "London", "GB", Continent::Europe),
            city(3, "Ouagadougou", "BF", Continent::Africa),
            city(4, "New York", "US", Continent::NorthAmerica),
        ];
        let refs: Vec<&City> = cs.iter().collect();
        let cov = scan_cities(&v, &refs).unwrap();
        let matched: Vec<_> = cov.cities.iter().filter(|m| m.matched).map(|m| m.geoname_id).collect();
        assert_eq!(matched, vec![1, 2]);
        assert_eq!(cov.continent(Continent::Europe).percentage(), Some(100.0));
        assert_eq!(cov.continent(Continent::Africa).percentage(), Some(0.0));
        assert_eq!(
            cov.continent(Continent::NorthAmerica),
            CoverageCell { matched: 0, total: 1 }
        );
    }

    #[test]
    fn cased_vocabulary_is_case_sensitive() {
        let v = Vocabulary::from_entries("m", Casing::Cased, ["Paris"]).unwrap();
        let cs = [
            city(1, "Paris", "FR", Continent::Europe),
            city(2, "paris", "FR", Continent::Europe),
        ];
        let refs: Vec<&City> = cs.iter().collect();
        let cov = scan_cities(&v, &refs).unwrap();
        assert_eq!(
            cov.countries[&CountryCode::new("FR").unwrap()],
            CoverageCell { matched: 1, total: 2 }
        );
    }

    #[test]
    fn unmarked_matches_are_flagged() {
        let v = Vocabulary::from_entries("m", Casing::Cased, ["ĠParis", "Lagos"]).unwrap();
        let cs = [
            city(1, "Paris", "FR", Continent::Europe),
            city(2, "Lagos", "NG", Continent::Africa),
        ];
        let refs: Vec<&City> = cs.iter().collect();
        let cov = scan_cities(&v, &refs).unwrap();
        assert!(!cov.cities[0].via_unmarked_token);
        assert!(cov.cities[1].matched && cov.cities[1].via_unmarked_token);
    }

    #[test]
    fn no_city_tokens_zero_everywhere() {
        let v = Vocabulary::from_entries("m", Casing::Uncased, ["the", "of"]).unwrap();
        let cs = [
            city(1, "Paris", "FR", Continent::Europe),
            city(2, "Lima", "PE", Continent::SouthAmerica),
        ];
        let refs: Vec<&City> = cs.iter().collect();
        let cov = scan_cities(&v, &refs).unwrap();
        assert!(cov.continents.values().all(|c| c.percentage() == Some(0.0)));
        assert!(cov.countries.values().all(|c| c.matched == 0));
    }

    #[test]
    fn empty_city_list_rejected() {
        let v = Vocabulary::from_entries("m", Casing::Uncased, ["a"]).unwrap();
        assert!(scan_cities(&v, &[]).is_err());
    }

    #[test]
    fn continent_pooled_vs_country_mean() {
        let v = Vocabulary::from_entries("m", Casing::Uncased, ["a"]).unwrap();
        let cs = [
            city(1, "A", "FR", Continent::Europe),
            city(2, "B", "FR", Continent::Europe),
            city(3, "C", "FR", Continent::Europe),
            city(4, "A", "DE", Continent::Europe),
        ];
        let refs: Vec<&City> = cs.iter().collect();
        let cov = scan_cities(&v, &refs).unwrap();
        // pooled: 2 of 4; country mean: (33.33 + 100) / 2
        assert_eq!(cov.continent(Continent::Europe).percentage(), Some(50.0));
        let mean = cov.continent_country_mean[&Continent::Europe];
        assert!((mean - (100.0 / 3.0 + 100.0) / 2.0).abs() < 1e-12);
    }
}
