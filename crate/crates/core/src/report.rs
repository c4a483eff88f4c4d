//! Tables, choropleth data and run manifests.
//!
//! Summary tables put the six continents in a fixed column order and render
//! values with two decimals, rounding half away from zero. Empty cells are
//! written as `NA`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use geojson::{Feature, FeatureCollection, GeoJson, JsonObject, JsonValue};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::country::{Continent, CountryCode};
use crate::distortion::{GdiRecord, GdiTable, RegressionTable};
use crate::error::{Error, Result};
use crate::probekit::AccuracyTable;
use crate::vocabscan::VocabCoverage;

const BOUNDARIES: &str = include_str!("../data/countries_50m.geojson");

/// Continent columns in display order.
pub const CONTINENT_COLUMNS: [Continent; 6] = [
    Continent::NorthAmerica,
    Continent::SouthAmerica,
    Continent::Europe,
    Continent::Africa,
    Continent::Asia,
    Continent::Oceania,
];

pub const NA: &str = "NA";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Markdown,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        }
    }
}

/// Rounds to two decimals, ties away from zero.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Two-decimal rendering; `None` and non-finite values become `NA`.
pub fn format2(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => {
            let r = round2(v);
            // avoid "-0.00"
            format!("{:.2}", if r == 0.0 { 0.0 } else { r })
        }
        _ => NA.to_owned(),
    }
}

/// A rendered table: header plus rows of preformatted cells.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Serializes a table. Output depends only on the table and the format.
pub fn emit_table(table: &Table, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(&table.header)?;
            for row in &table.rows {
                w.write_record(row)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output of utf-8 input"))
        }
        TableFormat::Markdown => {
            let cell = |s: &str| s.replace('|', "\\|");
            let mut out = String::new();
            let line =
                |cells: &mut dyn Iterator<Item = String>| format!("| {} |\n", cells.collect::<Vec<_>>().join(" | "));
            out.push_str(&line(&mut table.header.iter().map(|h| cell(h))));
            out.push_str(&line(&mut table.header.iter().map(|_| "---".to_owned())));
            for row in &table.rows {
                out.push_str(&line(&mut row.iter().map(|c| cell(c))));
            }
            Ok(out)
        }
    }
}

fn continent_header(first: &[&str], trailing: &[&str]) -> Vec<String> {
    first
        .iter()
        .copied()
        .chain(CONTINENT_COLUMNS.iter().map(|c| c.label()))
        .chain(trailing.iter().copied())
        .map(str::to_owned)
        .collect()
}

/// One row per model: accuracy percentage per continent, then World.
pub fn accuracy_table(models: &[(&str, &AccuracyTable)]) -> Table {
    let mut t = Table::new(continent_header(&["model"], &["World"]));
    for (model, acc) in models {
        let mut row = vec![model.to_string()];
        row.extend(CONTINENT_COLUMNS.iter().map(|&c| format2(acc.cell(c).percentage())));
        row.push(format2(acc.world.percentage()));
        t.push(row);
    }
    t
}

/// Probe counts per continent, the "Nb countries" line of an accuracy report.
pub fn probe_count_row(acc: &AccuracyTable) -> Vec<String> {
    let mut row = vec!["Nb countries".to_owned()];
    row.extend(CONTINENT_COLUMNS.iter().map(|&c| acc.cell(c).total.to_string()));
    row.push(acc.world.total.to_string());
    row
}

/// Accuracy table followed by the probe-count row.
pub fn accuracy_table_with_counts(model: &str, acc: &AccuracyTable) -> Table {
    let mut t = accuracy_table(&[(model, acc)]);
    t.push(probe_count_row(acc));
    t
}

/// One row per model with the pooled coverage percentage, and a second row
/// with the unweighted mean over member countries.
pub fn vocab_table(models: &[(&str, &VocabCoverage)]) -> Table {
    let mut t = Table::new(continent_header(&["model", "aggregate"], &[]));
    for (model, cov) in models {
        let mut pooled = vec![model.to_string(), "pooled".to_owned()];
        pooled.extend(
            CONTINENT_COLUMNS
                .iter()
                .map(|&c| format2(cov.continent(c).percentage())),
        );
        t.push(pooled);
        let mut mean = vec![model.to_string(), "country-mean".to_owned()];
        mean.extend(
            CONTINENT_COLUMNS
                .iter()
                .map(|c| format2(cov.continent_country_mean.get(c).copied())),
        );
        t.push(mean);
    }
    t
}

pub fn vocab_country_table(cov: &VocabCoverage, continent_of: impl Fn(CountryCode) -> Option<Continent>) -> Table {
    let mut t = Table::new(["country_code", "continent", "matched", "total", "percentage"]);
    for (code, cell) in &cov.countries {
        t.push(vec![
            code.to_string(),
            continent_of(*code).map_or(NA.to_owned(), |c| c.label().to_owned()),
            cell.matched.to_string(),
            cell.total.to_string(),
            format2(cell.percentage()),
        ]);
    }
    t
}

/// One row per model with r2 per continent.
pub fn regression_summary_table(models: &[(&str, &RegressionTable)]) -> Table {
    let mut t = Table::new(continent_header(&["model"], &[]));
    for (model, reg) in models {
        let mut row = vec![model.to_string()];
        row.extend(CONTINENT_COLUMNS.iter().map(|&c| format2(reg.get(c).map(|r| r.fit.r2))));
        t.push(row);
    }
    t
}

/// Full fit parameters, one row per continent, shortest round-trip floats.
pub fn regression_detail_table(reg: &RegressionTable) -> Table {
    let mut t = Table::new(["continent", "n_cities", "n_pairs", "slope_per_km", "intercept", "r2"]);
    for &c in &CONTINENT_COLUMNS {
        match reg.get(c) {
            Some(r) => t.push(vec![
                c.label().to_owned(),
                r.n_cities.to_string(),
                r.fit.n_pairs.to_string(),
                r.fit.slope.to_string(),
                r.fit.intercept.to_string(),
                r.fit.r2.to_string(),
            ]),
            None => {
                let n = reg.omitted.iter().find(|o| o.continent == c).map_or(0, |o| o.n_cities);
                t.push(vec![
                    c.label().to_owned(),
                    n.to_string(),
                    "0".into(),
                    NA.into(),
                    NA.into(),
                    NA.into(),
                ]);
            }
        }
    }
    t
}

/// Three rows per model: continent mean, farthest count, nearest count.
pub fn gdi_summary_table(models: &[(&str, &GdiTable)]) -> Table {
    let mut t = Table::new(continent_header(&["model", "metric"], &[]));
    for (model, gdi) in models {
        let mut mean = vec![model.to_string(), "mean".to_owned()];
        mean.extend(CONTINENT_COLUMNS.iter().map(|&c| format2(gdi.row(c).mean)));
        t.push(mean);
        let mut far = vec![model.to_string(), "farthest".to_owned()];
        far.extend(CONTINENT_COLUMNS.iter().map(|&c| gdi.row(c).farthest.to_string()));
        t.push(far);
        let mut near = vec![model.to_string(), "nearest".to_owned()];
        near.extend(CONTINENT_COLUMNS.iter().map(|&c| gdi.row(c).nearest.to_string()));
        t.push(near);
    }
    t
}

/// Per-country GDI records with group membership.
pub fn gdi_country_table(records: &[GdiRecord], table: &GdiTable) -> Table {
    let mut t = Table::new([
        "country_code",
        "continent",
        "n_cities",
        "n_pairs",
        "mean_d_sem",
        "mean_d_geo_norm",
        "gdi",
        "group",
    ]);
    let mut sorted: Vec<&GdiRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.country_code);
    for r in sorted {
        let group = if table.farthest.contains(&r.country_code) {
            "farthest"
        } else if table.nearest.contains(&r.country_code) {
            "nearest"
        } else {
            ""
        };
        t.push(vec![
            r.country_code.to_string(),
            r.continent.label().to_owned(),
            r.n_cities.to_string(),
            r.n_pairs.to_string(),
            r.mean_d_sem.to_string(),
            r.mean_d_geo_norm.to_string(),
            r.gdi.to_string(),
            group.to_owned(),
        ]);
    }
    t
}

fn boundaries() -> &'static FeatureCollection {
    static CELL: OnceLock<FeatureCollection> = OnceLock::new();
    CELL.get_or_init(|| {
        BOUNDARIES
            .parse::<FeatureCollection>()
            .expect("bundled boundary file is valid GeoJSON")
    })
}

/// ISO codes that have a geometry in the bundled boundary file.
pub fn boundary_codes() -> Vec<CountryCode> {
    boundaries()
        .features
        .iter()
        .filter_map(|f| f.property("iso_a2").and_then(JsonValue::as_str))
        .filter_map(|s| CountryCode::new(s).ok())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Choropleth {
    pub geojson: String,
    pub warnings: Vec<String>,
}

/// One feature per bundled country with `{iso_a2, metric_name, value}`;
/// countries without a value get `null`.
pub fn emit_choropleth(values: &BTreeMap<CountryCode, f64>, metric_name: &str) -> Choropleth {
    let base = boundaries();
    let mut warnings = Vec::new();
    let mut known = std::collections::BTreeSet::new();
    let features: Vec<Feature> = base
        .features
        .iter()
        .map(|f| {
            let iso = f
                .property("iso_a2")
                .and_then(JsonValue::as_str)
                .unwrap_or_default()
                .to_owned();
            let value = CountryCode::new(&iso).ok().and_then(|c| {
                known.insert(c);
                values.get(&c).copied()
            });
            let value = match value {
                Some(v) if v.is_finite() => JsonValue::from(v),
                Some(v) => {
                    warnings.push(format!("{iso}: non-finite value {v} written as null"));
                    JsonValue::Null
                }
                None => JsonValue::Null,
            };
            let mut props = JsonObject::new();
            props.insert("iso_a2".into(), JsonValue::from(iso));
            props.insert("metric_name".into(), JsonValue::from(metric_name));
            props.insert("value".into(), value);
            Feature {
                bbox: None,
                geometry: f.geometry.clone(),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    for code in values.keys().filter(|c| !known.contains(c)) {
        let msg = format!("{code}: no boundary in the bundled map; skipped");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let fc = FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    };
    Choropleth {
        geojson: GeoJson::from(fc).to_string(),
        warnings,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Settings that change indicator results.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestConfig {
    pub geo_norm: String,
    pub gdi_aggregation: String,
    pub casing: Option<String>,
    pub vocab_format: Option<String>,
    pub vocab_min_population: u64,
    pub corr_min_population: u64,
    pub gdi_top_k: usize,
}

/// Sidecar written next to every model's artifacts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub gazetteer_sha256: String,
    pub continent_table_version: String,
    pub alias_table_version: String,
    pub model_id: String,
    pub indicators: Vec<String>,
    pub config: ManifestConfig,
    pub timestamp: String,
    pub artifacts: Vec<String>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probekit::AccuracyCell;

    fn acc(cells: [(usize, usize); 6]) -> AccuracyTable {
        let mut t = AccuracyTable::default();
        for (c, (correct, total)) in CONTINENT_COLUMNS.iter().zip(cells) {
            if total > 0 {
                t.continents.insert(*c, AccuracyCell { correct, total });
            }
            t.world.correct += correct;
            t.world.total += total;
        }
        t
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(format2(Some(57.9439)), "57.94");
        assert_eq!(format2(Some(74.0)), "74.00");
        assert_eq!(format2(Some(0.125)), "0.13");
        assert_eq!(format2(Some(-0.125)), "-0.13");
        assert_eq!(format2(Some(-0.001)), "0.00");
        assert_eq!(format2(None), "NA");
        assert_eq!(format2(Some(f64::NAN)), "NA");
    }

    #[test]
    fn paper_style_accuracy_row() {
        // 35.14 = 13/37, 78.57 = 11/14, 74.00 = 37/50, 55.56 = 30/54, 75.47 = 40/53, 16.67 = 4/24
        let mut t = acc([(13, 37), (11, 14), (37, 50), (30, 54), (40, 53), (4, 24)]);
        // the published World cell pools one probe that sits in no continent column
        t.world = AccuracyCell {
            correct: 135,
            total: 233,
        };
        let csv = emit_table(&accuracy_table(&[("bert", &t)]), TableFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "model,N.America,S.America,Europe,Africa,Asia,Oceania,World");
        assert_eq!(lines[1], "bert,35.14,78.57,74.00,55.56,75.47,16.67,57.94");
    }

    #[test]
    fn empty_continent_is_na() {
        let t = acc([(1, 2), (0, 0), (1, 1), (0, 1), (1, 1), (0, 0)]);
        let row = &accuracy_table(&[("m", &t)]).rows[0];
        assert_eq!(row[2], "NA");
        assert_eq!(row[6], "NA");
        assert_eq!(row[1], "50.00");
    }

    #[test]
    fn markdown_layout() {
        let t = acc([(1, 2), (0, 0), (1, 1), (0, 1), (1, 1), (0, 0)]);
        let md = emit_table(&accuracy_table(&[("m|x", &t)]), TableFormat::Markdown).unwrap();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("| model | N.America |"));
        assert_eq!(lines[1], "| --- | --- | --- | --- | --- | --- | --- | --- |");
        assert!(lines[2].starts_with("| m\\|x | 50.00 | NA |"));
    }

    #[test]
    fn gdi_three_rows_per_model() {
        use crate::distortion::{gdi_table, GdiRecord};
        let recs: Vec<GdiRecord> = ["FR", "NZ", "BR", "JP"]
            .iter()
            .zip([
                Continent::Europe,
                Continent::Oceania,
                Continent::SouthAmerica,
                Continent::Asia,
            ])
            .zip([1.1, 0.88, 1.0, 0.95])
            .map(|((c, k), g)| GdiRecord {
                country_code: CountryCode::new(c).unwrap(),
                continent: k,
                n_cities: 3,
                n_pairs: 9,
                mean_d_sem: 0.1,
                mean_d_geo_norm: 0.2,
                gdi: g,
            })
            .collect();
        let table = gdi_table(&recs).unwrap();
        let t = gdi_summary_table(&[("bert", &table)]);
        let metrics: Vec<&str> = t.rows.iter().map(|r| r[1].as_str()).collect();
        assert_eq!(metrics, ["mean", "farthest", "nearest"]);
        assert_eq!(t.rows[0][7], "0.88");
        assert_eq!(t.rows[0][2], "NA");
        assert_eq!(t.rows[1][4], "1");
        assert_eq!(t.rows[2][7], "1");
    }

    fn parse_fc(s: &str) -> FeatureCollection {
        s.parse::<FeatureCollection>().unwrap()
    }

    #[test]
    fn choropleth_single_value() {
        let values = BTreeMap::from([(CountryCode::new("FR").unwrap(), 0.42)]);
        let out = emit_choropleth(&values, "gdi");
        assert!(out.warnings.is_empty());
        let fc = parse_fc(&out.geojson);
        let with_value: Vec<_> = fc
            .features
            .iter()
            .filter(|f| !f.property("value").unwrap().is_null())
            .collect();
        assert_eq!(with_value.len(), 1);
        assert_eq!(with_value[0].property("iso_a2").unwrap(), "FR");
        assert_eq!(with_value[0].property("value").unwrap().as_f64(), Some(0.42));
        assert!(fc.features.iter().all(|f| f.property("metric_name").unwrap() == "gdi"));
    }

    #[test]
    fn choropleth_empty_and_unknown() {
        let out = emit_choropleth(&BTreeMap::new(), "vocab");
        let fc = parse_fc(&out.geojson);
        assert_eq!(fc.features.len(), boundary_codes().len());
        assert!(fc.features.iter().all(|f| f.property("value").unwrap().is_null()));

        let values = BTreeMap::from([(CountryCode::new("ZZ").unwrap(), 1.0)]);
        let out = emit_choropleth(&values, "vocab");
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].starts_with("ZZ"));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let m = RunManifest {
            toolkit_version: "0.1.0".into(),
            model_id: "bert".into(),
            indicators: vec!["accuracy".into()],
            errors: vec!["boom".into()],
            ..Default::default()
        };
        let back: RunManifest = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
