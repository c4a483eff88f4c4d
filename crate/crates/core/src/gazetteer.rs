//! GeoNames city export ingestion and the city subsets each indicator uses.
//!
//! The loader reads the semicolon-delimited OpenDataSoft export of the
//! GeoNames "cities with a population over 1000" table. Rows that fail to
//! parse are skipped and collected in a [`LoadReport`]; only a malformed
//! header or an empty result is fatal.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Read;

use serde::Serialize;

use crate::country::{Continent, ContinentTable, CountryCode, Region};
use crate::error::{Error, Result};

/// Feature code GeoNames uses for the capital of a political entity.
pub const CAPITAL_FEATURE_CODE: &str = "PPLC";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct City {
    pub geoname_id: u64,
    pub name: String,
    pub ascii_name: String,
    pub country_code: CountryCode,
    pub continent: Continent,
    pub latitude: f64,
    pub longitude: f64,
    pub population: u64,
    pub is_capital: bool,
}

/// Header names of the required columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnNames {
    pub geoname_id: String,
    pub name: String,
    pub ascii_name: String,
    pub country_code: String,
    pub population: String,
    pub feature_code: String,
    pub coordinates: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        ColumnNames {
            geoname_id: "Geoname ID".into(),
            name: "Name".into(),
            ascii_name: "ASCII Name".into(),
            country_code: "Country Code".into(),
            population: "Population".into(),
            feature_code: "Feature Code".into(),
            coordinates: "Coordinates".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions<'a> {
    pub min_population: u64,
    pub columns: ColumnNames,
    pub continents: &'a ContinentTable,
}

impl LoadOptions<'static> {
    pub fn with_min_population(min_population: u64) -> Self {
        LoadOptions {
            min_population,
            columns: ColumnNames::default(),
            continents: ContinentTable::bundled(),
        }
    }
}

impl Default for LoadOptions<'static> {
    fn default() -> Self {
        LoadOptions::with_min_population(1000)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

/// What happened to every data row of a load.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub kept: usize,
    pub below_threshold: usize,
    pub antarctica_dropped: usize,
    /// Unmappable country codes and how many rows carried each.
    pub unmapped_countries: BTreeMap<String, usize>,
    /// Capitals demoted because their country already had a more populous PPLC row.
    pub extra_capitals: Vec<u64>,
    pub row_errors: Vec<RowError>,
}

impl LoadReport {
    pub fn unmapped_rows(&self) -> usize {
        self.unmapped_countries.values().sum()
    }

    /// Plain-text sidecar listing skipped rows.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rows read: {}", self.rows_read);
        let _ = writeln!(s, "rows kept: {}", self.kept);
        let _ = writeln!(s, "below population threshold: {}", self.below_threshold);
        let _ = writeln!(s, "antarctica dropped: {}", self.antarctica_dropped);
        let _ = writeln!(s, "unmapped country rows: {}", self.unmapped_rows());
        for (code, n) in &self.unmapped_countries {
            let shown = if code.is_empty() { "<empty>" } else { code };
            let _ = writeln!(s, "  {shown}: {n}");
        }
        let _ = writeln!(s, "demoted duplicate capitals: {}", self.extra_capitals.len());
        for id in &self.extra_capitals {
            let _ = writeln!(s, "  geoname_id {id}");
        }
        let _ = writeln!(s, "row errors: {}", self.row_errors.len());
        for e in &self.row_errors {
            let _ = writeln!(s, "  line {}: {}", e.line, e.message);
        }
        s
    }
}

/// Immutable, indexed collection of cities.
#[derive(Clone, Debug, PartialEq)]
pub struct Gazetteer {
    cities: Vec<City>,
    by_id: HashMap<u64, usize>,
    by_country: BTreeMap<CountryCode, Vec<usize>>,
    capitals: BTreeMap<CountryCode, usize>,
}

/// Capitals grouped by continent, plus the countries that have none.
#[derive(Clone, Debug, PartialEq)]
pub struct CapitalsByContinent<'g> {
    pub by_continent: BTreeMap<Continent, Vec<(&'g City, CountryCode)>>,
    pub without_capital: Vec<CountryCode>,
}

impl CapitalsByContinent<'_> {
    pub fn count(&self, continent: Continent) -> usize {
        self.by_continent.get(&continent).map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.by_continent.values().map(Vec::len).sum()
    }
}

struct Columns {
    geoname_id: usize,
    name: usize,
    ascii_name: usize,
    country_code: usize,
    population: usize,
    feature_code: usize,
    coordinates: usize,
}

impl Columns {
    fn resolve(header: &csv::StringRecord, names: &ColumnNames) -> Result<Columns> {
        let find = |wanted: &str| {
            header
                .iter()
                .position(|h| h.trim_start_matches('\u{feff}').trim() == wanted)
                .ok_or_else(|| Error::MissingColumn(wanted.to_owned()))
        };
        Ok(Columns {
            geoname_id: find(&names.geoname_id)?,
            name: find(&names.name)?,
            ascii_name: find(&names.ascii_name)?,
            country_code: find(&names.country_code)?,
            population: find(&names.population)?,
            feature_code: find(&names.feature_code)?,
            coordinates: find(&names.coordinates)?,
        })
    }
}

struct ParsedRow {
    geoname_id: u64,
    name: String,
    ascii_name: String,
    country: String,
    population: u64,
    capital: bool,
    latitude: f64,
    longitude: f64,
}

fn field<'r>(rec: &'r csv::StringRecord, idx: usize, what: &str) -> std::result::Result<&'r str, String> {
    rec.get(idx)
        .map(str::trim)
        .ok_or_else(|| format!("missing field `{what}`"))
}

fn parse_coordinates(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lat, lon) = s
        .split_once(',')
        .ok_or_else(|| format!("unparseable coordinates `{s}`"))?;
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|_| format!("unparseable latitude `{}`", lat.trim()))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|_| format!("unparseable longitude `{}`", lon.trim()))?;
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(format!("coordinates out of bounds ({lat}, {lon})"));
    }
    Ok((lat, lon))
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns) -> std::result::Result<ParsedRow, String> {
    let id_raw = field(rec, cols.geoname_id, "geoname id")?;
    let geoname_id = id_raw
        .parse()
        .map_err(|_| format!("unparseable geoname id `{id_raw}`"))?;
    let pop_raw = field(rec, cols.population, "population")?;
    let population = pop_raw
        .parse()
        .map_err(|_| format!("unparseable population `{pop_raw}`"))?;
    let (latitude, longitude) = parse_coordinates(field(rec, cols.coordinates, "coordinates")?)?;
    let name = field(rec, cols.name, "name")?.to_owned();
    let mut ascii_name = field(rec, cols.ascii_name, "ascii name")?.to_owned();
    if ascii_name.is_empty() {
        ascii_name = name.clone();
    }
    Ok(ParsedRow {
        geoname_id,
        name,
        ascii_name,
        country: field(rec, cols.country_code, "country code")?.to_owned(),
        population,
        capital: field(rec, cols.feature_code, "feature code")? == CAPITAL_FEATURE_CODE,
        latitude,
        longitude,
    })
}

/// Reads a gazetteer export, keeping rows with `population >= min_population`
/// in one of the six continents.
pub fn load_gazetteer<R: Read>(source: R, opts: &LoadOptions<'_>) -> Result<(Gazetteer, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    let cols = Columns::resolve(&header, &opts.columns)?;

    let mut report = LoadReport::default();
    let mut cities: Vec<City> = Vec::new();
    let mut seen: HashMap<u64, u64> = HashMap::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                // csv-level failures (bad UTF-8, etc.) are row errors
                let line = e.position().map_or(0, |p| p.line());
                report.rows_read += 1;
                report.row_errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(e.into());
                }
                continue;
            }
        }
        report.rows_read += 1;
        let line = rec.position().map_or(0, |p| p.line());
        let row = match parse_row(&rec, &cols) {
            Ok(r) => r,
            Err(message) => {
                report.row_errors.push(RowError { line, message });
                continue;
            }
        };
        if row.population < opts.min_population {
            report.below_threshold += 1;
            continue;
        }
        let region = CountryCode::new(&row.country)
            .ok()
            .and_then(|c| opts.continents.region(c).map(|r| (c, r)));
        let (country_code, continent) = match region {
            Some((c, Region::Continent(k))) => (c, k),
            Some((_, Region::Antarctica)) => {
                report.antarctica_dropped += 1;
                continue;
            }
            None => {
                *report.unmapped_countries.entry(row.country).or_default() += 1;
                continue;
            }
        };
        if let Some(first) = seen.insert(row.geoname_id, line) {
            report.row_errors.push(RowError {
                line,
                message: format!("duplicate geoname id {} (first seen at line {first})", row.geoname_id),
            });
            continue;
        }
        cities.push(City {
            geoname_id: row.geoname_id,
            name: row.name,
            ascii_name: row.ascii_name,
            country_code,
            continent,
            latitude: row.latitude,
            longitude: row.longitude,
            population: row.population,
            is_capital: row.capital,
        });
    }

    report.extra_capitals = demote_extra_capitals(&mut cities);
    report.kept = cities.len();
    if cities.is_empty() {
        return Err(Error::EmptyGazetteer);
    }
    Ok((Gazetteer::from_cities(cities)?, report))
}

/// Keeps only the most populous PPLC row per country (lowest id on ties).
fn demote_extra_capitals(cities: &mut [City]) -> Vec<u64> {
    let mut best: BTreeMap<CountryCode, usize> = BTreeMap::new();
    for (i, c) in cities.iter().enumerate().filter(|(_, c)| c.is_capital) {
        best.entry(c.country_code)
            .and_modify(|b| {
                let cur = &cities[*b];
                if (c.population, std::cmp::Reverse(c.geoname_id)) > (cur.population, std::cmp::Reverse(cur.geoname_id))
                {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    let mut demoted = Vec::new();
    for (i, c) in cities.iter_mut().enumerate() {
        if c.is_capital && best.get(&c.country_code) != Some(&i) {
            c.is_capital = false;
            demoted.push(c.geoname_id);
        }
    }
    demoted.sort_unstable();
    demoted
}

fn population_order(a: &City, b: &City) -> std::cmp::Ordering {
    b.population
        .cmp(&a.population)
        .then_with(|| a.ascii_name.cmp(&b.ascii_name))
        .then_with(|| a.geoname_id.cmp(&b.geoname_id))
}

impl Gazetteer {
    /// Builds the indexes over an already-validated city list.
    pub fn from_cities(cities: Vec<City>) -> Result<Self> {
        if cities.is_empty() {
            return Err(Error::EmptyGazetteer);
        }
        let mut by_id = HashMap::with_capacity(cities.len());
        let mut by_country: BTreeMap<CountryCode, Vec<usize>> = BTreeMap::new();
        let mut capitals = BTreeMap::new();
        let mut continent_of: BTreeMap<CountryCode, Continent> = BTreeMap::new();
        for (i, c) in cities.iter().enumerate() {
            if !(-90.0..=90.0).contains(&c.latitude) || !(-180.0..=180.0).contains(&c.longitude) {
                return Err(Error::domain(format!(
                    "city {} has out-of-bounds coordinates",
                    c.geoname_id
                )));
            }
            if by_id.insert(c.geoname_id, i).is_some() {
                return Err(Error::domain(format!("duplicate geoname id {}", c.geoname_id)));
            }
            if *continent_of.entry(c.country_code).or_insert(c.continent) != c.continent {
                return Err(Error::domain(format!(
                    "country {} spans two continents",
                    c.country_code
                )));
            }
            by_country.entry(c.country_code).or_default().push(i);
            if c.is_capital && capitals.insert(c.country_code, i).is_some() {
                return Err(Error::domain(format!("country {} has two capitals", c.country_code)));
            }
        }
        for idx in by_country.values_mut() {
            idx.sort_by(|&a, &b| population_order(&cities[a], &cities[b]));
        }
        Ok(Gazetteer {
            cities,
            by_id,
            by_country,
            capitals,
        })
    }

    pub fn cities(&self) -> &[City] {
        &self.cities
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn get(&self, geoname_id: u64) -> Option<&City> {
        self.by_id.get(&geoname_id).map(|&i| &self.cities[i])
    }

    pub fn countries(&self) -> impl Iterator<Item = CountryCode> + '_ {
        self.by_country.keys().copied()
    }

    pub fn continent_of(&self, country: CountryCode) -> Option<Continent> {
        let first = *self.by_country.get(&country)?.first()?;
        Some(self.cities[first].continent)
    }

    /// All cities of a country, most populous first.
    pub fn country_cities(&self, country: CountryCode) -> Vec<&City> {
        self.by_country
            .get(&country)
            .map(|idx| idx.iter().map(|&i| &self.cities[i]).collect())
            .unwrap_or_default()
    }

    pub fn capital(&self, country: CountryCode) -> Option<&City> {
        self.capitals.get(&country).map(|&i| &self.cities[i])
    }

    pub fn capitals(&self) -> impl Iterator<Item = &City> + '_ {
        self.capitals.values().map(|&i| &self.cities[i])
    }

    pub fn capitals_by_continent(&self) -> CapitalsByContinent<'_> {
        let mut by_continent: BTreeMap<Continent, Vec<(&City, CountryCode)>> = BTreeMap::new();
        // BTreeMap iteration keeps each list in country-code order
        for (&code, &i) in &self.capitals {
            let city = &self.cities[i];
            by_continent.entry(city.continent).or_default().push((city, code));
        }
        let without_capital = self
            .by_country
            .keys()
            .filter(|c| !self.capitals.contains_key(c))
            .copied()
            .collect();
        CapitalsByContinent {
            by_continent,
            without_capital,
        }
    }

    /// The `k` most populous cities of `country`, ordered by population
    /// descending, then ascii name, then geoname id.
    pub fn top_k_cities(&self, country: CountryCode, k: usize) -> Vec<&City> {
        self.by_country
            .get(&country)
            .map(|idx| idx.iter().take(k).map(|&i| &self.cities[i]).collect())
            .unwrap_or_default()
    }

    /// Union over all countries of [`Gazetteer::top_k_cities`], by geoname id.
    pub fn top_k_union(&self, k: usize) -> Vec<&City> {
        let mut out: Vec<&City> = self.by_country.keys().flat_map(|&c| self.top_k_cities(c, k)).collect();
        out.sort_by_key(|c| c.geoname_id);
        out
    }

    /// Cities with at least `min` inhabitants, by geoname id.
    pub fn with_min_population(&self, min: u64) -> Vec<&City> {
        let mut out: Vec<&City> = self.cities.iter().filter(|c| c.population >= min).collect();
        out.sort_by_key(|c| c.geoname_id);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "Geoname ID;Name;ASCII Name;Alternate Names;Feature Class;Feature Code;Country Code;Population;Coordinates";

    fn csv(rows: &[&str]) -> String {
        let mut s = String::from(HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s.push('\n');
        s
    }

    fn load(text: &str, min: u64) -> Result<(Gazetteer, LoadReport)> {
        load_gazetteer(text.as_bytes(), &LoadOptions::with_min_population(min))
    }

    fn cc(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    #[test]
    fn paris_row_maps_directly() {
        let (g, report) = load(&csv(&["2988507;Paris;Paris;;P;PPLC;FR;2138551;48.8566, 2.3522"]), 1000).unwrap();
        let paris = g.get(2988507).unwrap();
        assert_eq!(paris.country_code, cc("FR"));
        assert_eq!(paris.continent, Continent::Europe);
        assert!(paris.is_capital);
        assert_eq!(paris.latitude, 48.8566);
        assert_eq!(paris.longitude, 2.3522);
        assert_eq!(report.kept, 1);
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let text = csv(&[
            "1;Small;Small;;P;PPL;FR;999;45.0, 3.0",
            "2;Exact;Exact;;P;PPL;FR;1000;45.0, 3.1",
        ]);
        let (g, report) = load(&text, 1000).unwrap();
        assert!(g.get(1).is_none());
        assert!(g.get(2).is_some());
        assert_eq!(report.below_threshold, 1);
    }

    #[test]
    fn missing_column_names_it() {
        let text = "Geoname ID;Name;ASCII Name;Feature Code;Country Code;Population\n";
        match load(text, 0) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "Coordinates"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_rows_are_collected_not_fatal() {
        let text = csv(&[
            "1;A;A;;P;PPL;FR;5000;45.0, 3.0",
            "2;B;B;;P;PPL;FR;lots;45.0, 3.0",
            "3;C;C;;P;PPL;FR;5000;north, 3.0",
            "4;D;D;;P;PPL;FR;5000;95.0, 3.0",
            "1;A again;A again;;P;PPL;FR;5000;45.0, 3.0",
        ]);
        let (g, report) = load(&text, 0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(report.row_errors.len(), 4);
        assert_eq!(report.row_errors[0].line, 3);
        assert!(report.row_errors[0].message.contains("population"));
        assert!(report.row_errors[3].message.contains("duplicate"));
        let text = report.render();
        assert!(text.contains("line 3:"));
    }

    #[test]
    fn antarctica_and_unmapped_are_counted() {
        let text = csv(&[
            "1;A;A;;P;PPL;FR;5000;45.0, 3.0",
            "2;Station;Station;;P;PPL;AQ;1200;-77.8, 166.6",
            "3;Nowhere;Nowhere;;P;PPL;ZZ;1200;0.0, 0.0",
            "4;Blank;Blank;;P;PPL;;1200;0.0, 0.0",
        ]);
        let (_, report) = load(&text, 0).unwrap();
        assert_eq!(report.antarctica_dropped, 1);
        assert_eq!(report.unmapped_countries.get("ZZ"), Some(&1));
        assert_eq!(report.unmapped_countries.get(""), Some(&1));
        assert_eq!(report.kept, 1);
    }

    #[test]
    fn empty_result_is_an_error() {
        let text = csv(&["1;A;A;;P;PPL;FR;10;45.0, 3.0"]);
        assert!(matches!(load(&text, 1000), Err(Error::EmptyGazetteer)));
        assert!(matches!(load(&csv(&[]), 0), Err(Error::EmptyGazetteer)));
    }

    #[test]
    fn byte_order_mark_in_header_is_ignored() {
        let text = format!("\u{feff}{}", csv(&["1;A;A;;P;PPL;FR;5000;45.0, 3.0"]));
        assert!(load(&text, 0).is_ok());
    }

    #[test]
    fn custom_header_names() {
        let text = "id;label;plain;country;pop;code;where\n7;X;X;DE;5000;PPL;52.5, 13.4\n";
        let opts = LoadOptions {
            min_population: 0,
            columns: ColumnNames {
                geoname_id: "id".into(),
                name: "label".into(),
                ascii_name: "plain".into(),
                country_code: "country".into(),
                population: "pop".into(),
                feature_code: "code".into(),
                coordinates: "where".into(),
            },
            continents: ContinentTable::bundled(),
        };
        let (g, _) = load_gazetteer(text.as_bytes(), &opts).unwrap();
        assert_eq!(g.get(7).unwrap().country_code, cc("DE"));
    }

    #[test]
    fn duplicate_capitals_keep_most_populous() {
        let text = csv(&[
            "1;Sucre;Sucre;;P;PPLC;BO;300000;-19.0, -65.2",
            "2;La Paz;La Paz;;P;PPLC;BO;800000;-16.5, -68.1",
        ]);
        let (g, report) = load(&text, 0).unwrap();
        assert_eq!(g.capital(cc("BO")).unwrap().geoname_id, 2);
        assert!(!g.get(1).unwrap().is_capital);
        assert_eq!(report.extra_capitals, vec![1]);
    }

    #[test]
    fn capitals_grouped_and_sorted() {
        let text = csv(&[
            "2988507;Paris;Paris;;P;PPLC;FR;2138551;48.8566, 2.3522",
            "2950159;Berlin;Berlin;;P;PPLC;DE;3426354;52.52437, 13.41053",
            "2867714;Munich;Munich;;P;PPL;DE;1260391;48.13743, 11.57549",
            "3117735;Madrid;Madrid;;P;PPL;ES;3255944;40.4165, -3.70256",
        ]);
        let (g, _) = load(&text, 0).unwrap();
        let caps = g.capitals_by_continent();
        let europe: Vec<_> = caps.by_continent[&Continent::Europe]
            .iter()
            .map(|(c, code)| (c.name.as_str(), code.as_str()))
            .collect();
        assert_eq!(europe, vec![("Berlin", "DE"), ("Paris", "FR")]);
        assert_eq!(caps.without_capital, vec![cc("ES")]);
        assert_eq!(caps.total(), 2);
    }

    #[test]
    fn no_capitals_gives_empty_mapping_and_report() {
        let text = csv(&["1;A;A;;P;PPL;FR;5000;45.0, 3.0"]);
        let (g, _) = load(&text, 0).unwrap();
        let caps = g.capitals_by_continent();
        assert!(caps.by_continent.is_empty());
        assert_eq!(caps.without_capital, vec![cc("FR")]);
    }

    #[test]
    fn top_k_ordering_and_short_countries() {
        let text = csv(&[
            "1;Half;Half;;P;PPL;FR;500000;45.0, 3.0",
            "2;Nine;Nine;;P;PPL;FR;9000000;45.0, 3.1",
            "3;One;One;;P;PPL;FR;1000000;45.0, 3.2",
            "4;Two;Two;;P;PPL;FR;2000000;45.0, 3.3",
            "5;Solo;Solo;;P;PPL;DE;10000;50.0, 8.0",
            "6;Duo;Duo;;P;PPL;DE;20000;50.0, 8.1",
        ]);
        let (g, _) = load(&text, 0).unwrap();
        let ids: Vec<u64> = g.top_k_cities(cc("FR"), 3).iter().map(|c| c.geoname_id).collect();
        assert_eq!(ids, vec![2, 4, 3]);
        assert_eq!(g.top_k_cities(cc("DE"), 3).len(), 2);
        assert!(g.top_k_cities(cc("JP"), 3).is_empty());
        let union: Vec<u64> = g.top_k_union(1).iter().map(|c| c.geoname_id).collect();
        assert_eq!(union, vec![2, 6]);
    }

    #[test]
    fn equal_population_tie_break_by_ascii_name() {
        // enumerate both input orders; the lexicographically smaller name wins either way
        let a = "1;Zeta;Zeta;;P;PPL;FR;5000;45.0, 3.0";
        let b = "2;Alpha;Alpha;;P;PPL;FR;5000;45.0, 3.1";
        for rows in [[a, b], [b, a]] {
            let (g, _) = load(&csv(&rows), 0).unwrap();
            let top = g.top_k_cities(cc("FR"), 1);
            assert_eq!(top[0].ascii_name, "Alpha");
        }
        // same name: geoname id decides
        let c = "9;Same;Same;;P;PPL;DE;5000;50.0, 8.0";
        let d = "3;Same;Same;;P;PPL;DE;5000;50.0, 8.1";
        let (g, _) = load(&csv(&[c, d]), 0).unwrap();
        assert_eq!(g.top_k_cities(cc("DE"), 1)[0].geoname_id, 3);
    }

    #[test]
    fn from_cities_rejects_duplicates() {
        let city = City {
            geoname_id: 1,
            name: "A".into(),
            ascii_name: "A".into(),
            country_code: cc("FR"),
            continent: Continent::Europe,
            latitude: 0.0,
            longitude: 0.0,
            population: 1,
            is_capital: false,
        };
        assert!(Gazetteer::from_cities(vec![city.clone(), city]).is_err());
    }
}
