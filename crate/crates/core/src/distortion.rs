//! Semantic-vs-geographic distance regression and the geographic
//! distortion index (GDI).

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::country::{Continent, CountryCode};
use crate::embedstore::{semantic_distance_matrix_with, EmbeddingSet};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::gazetteer::{City, Gazetteer};
use crate::geomath::{distance_matrix_with, normalize_geo, GeoDistanceMatrix, GeoNormScope};
use crate::matrix::PairMatrix;

/// Number of countries in each of the farthest and nearest groups.
pub const EXTREME_GROUP_SIZE: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairSample {
    pub key_a: u64,
    pub key_b: u64,
    pub d_geo_km: f64,
    pub d_sem: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairScope {
    WithinContinent,
    Global,
}

/// Every unordered pair of `cities` once, ordered by `(key_a, key_b)`.
pub fn build_pairs(
    cities: &[&City],
    geo: &GeoDistanceMatrix,
    sem: &PairMatrix,
    scope: PairScope,
) -> Result<Vec<PairSample>> {
    let mut sorted: Vec<&City> = cities.to_vec();
    sorted.sort_by_key(|c| c.geoname_id);
    let mut idx = Vec::with_capacity(sorted.len());
    for c in &sorted {
        let id = c.geoname_id;
        let gi = geo.matrix().index_of(id).ok_or(Error::MissingKey(id))?;
        let si = sem.index_of(id).ok_or(Error::MissingKey(id))?;
        idx.push((gi, si));
    }
    let mut out = Vec::new();
    for a in 0..sorted.len() {
        for b in (a + 1)..sorted.len() {
            if scope == PairScope::WithinContinent && sorted[a].continent != sorted[b].continent {
                continue;
            }
            if sorted[a].geoname_id == sorted[b].geoname_id {
                return Err(Error::domain(format!("city {} listed twice", sorted[a].geoname_id)));
            }
            out.push(PairSample {
                key_a: sorted[a].geoname_id,
                key_b: sorted[b].geoname_id,
                d_geo_km: geo.matrix().at(idx[a].0, idx[b].0),
                d_sem: sem.at(idx[a].1, idx[b].1),
            });
        }
    }
    Ok(out)
}

/// Ordinary least squares of `d_sem` on `d_geo_km`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub n_pairs: usize,
    /// Per kilometer.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_regression(samples: &[PairSample]) -> Result<LinearFit> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::domain(format!("regression needs at least 2 pairs, got {n}")));
    }
    let x0 = samples[0].d_geo_km;
    if samples.iter().all(|s| s.d_geo_km == x0) {
        return Err(Error::DegenerateRegressor);
    }
    let nf = n as f64;
    let mx = samples.iter().map(|s| s.d_geo_km).sum::<f64>() / nf;
    let my = samples.iter().map(|s| s.d_sem).sum::<f64>() / nf;
    let y0 = samples[0].d_sem;
    if samples.iter().all(|s| s.d_sem == y0) {
        return Ok(LinearFit {
            n_pairs: n,
            slope: 0.0,
            intercept: y0,
            r2: 0.0,
        });
    }
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for s in samples {
        let dx = s.d_geo_km - mx;
        sxx += dx * dx;
        sxy += dx * (s.d_sem - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for s in samples {
        let r = s.d_sem - (intercept + slope * s.d_geo_km);
        let t = s.d_sem - my;
        ss_res += r * r;
        ss_tot += t * t;
    }
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(LinearFit {
        n_pairs: n,
        slope,
        intercept,
        r2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegressionResult {
    pub continent: Continent,
    pub n_cities: usize,
    #[serde(flatten)]
    pub fit: LinearFit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OmittedContinent {
    pub continent: Continent,
    pub n_cities: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RegressionTable {
    /// In continent display order.
    pub results: Vec<RegressionResult>,
    pub omitted: Vec<OmittedContinent>,
}

impl RegressionTable {
    pub fn get(&self, c: Continent) -> Option<&RegressionResult> {
        self.results.iter().find(|r| r.continent == c)
    }
}

/// One within-continent regression per continent. `cities` should already
/// be restricted to the population floor and to embedded cities.
pub fn regression_table(
    cities: &[&City],
    geo: &GeoDistanceMatrix,
    sem: &PairMatrix,
    exec: Execution,
) -> Result<RegressionTable> {
    let groups: Vec<(Continent, Vec<&City>)> = Continent::ALL
        .iter()
        .map(|&k| (k, cities.iter().copied().filter(|c| c.continent == k).collect()))
        .collect();
    let fits = map_slice(exec, &groups, |(_, members)| {
        // two cities are a single pair: one point, no line
        if members.len() < 3 {
            return None;
        }
        Some(build_pairs(members, geo, sem, PairScope::Global).and_then(|p| fit_regression(&p)))
    });
    let mut table = RegressionTable::default();
    for ((continent, members), fit) in groups.iter().zip(fits) {
        let n_cities = members.len();
        match fit {
            None => table.omitted.push(OmittedContinent {
                continent: *continent,
                n_cities,
                reason: format!("{n_cities} qualifying cities; at least 3 are needed for 2 pairs"),
            }),
            Some(Ok(fit)) => table.results.push(RegressionResult {
                continent: *continent,
                n_cities,
                fit,
            }),
            Some(Err(Error::DegenerateRegressor)) => table.omitted.push(OmittedContinent {
                continent: *continent,
                n_cities,
                reason: Error::DegenerateRegressor.to_string(),
            }),
            Some(Err(e)) => return Err(e),
        }
    }
    Ok(table)
}

/// `(1 + d_sem) / (1 + d_geo_norm)` for a single city pair.
pub fn gdi_pair(d_sem: f64, d_geo_norm: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&d_sem) {
        return Err(Error::domain(format!("semantic distance {d_sem} outside [0, 2]")));
    }
    if !(0.0..=1.0).contains(&d_geo_norm) {
        return Err(Error::domain(format!(
            "normalized distance {d_geo_norm} outside [0, 1]"
        )));
    }
    Ok((1.0 + d_sem) / (1.0 + d_geo_norm))
}

/// How per-pair distances are folded into one value per country.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GdiAggregation {
    /// Mean over pairs of the per-pair index.
    #[default]
    MeanOfRatios,
    /// Index of the mean distances.
    RatioOfMeans,
}

impl std::str::FromStr for GdiAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-of-ratios" => Ok(GdiAggregation::MeanOfRatios),
            "ratio-of-means" => Ok(GdiAggregation::RatioOfMeans),
            _ => Err(Error::domain(format!("unknown gdi aggregation `{s}`"))),
        }
    }
}

impl std::fmt::Display for GdiAggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GdiAggregation::MeanOfRatios => "mean-of-ratios",
            GdiAggregation::RatioOfMeans => "ratio-of-means",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GdiOptions {
    pub top_k: usize,
    pub aggregation: GdiAggregation,
    pub norm_scope: GeoNormScope,
}

impl Default for GdiOptions {
    fn default() -> Self {
        GdiOptions {
            top_k: 3,
            aggregation: GdiAggregation::default(),
            norm_scope: GeoNormScope::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GdiRecord {
    pub country_code: CountryCode,
    pub continent: Continent,
    pub n_cities: usize,
    pub n_pairs: usize,
    pub mean_d_sem: f64,
    pub mean_d_geo_norm: f64,
    pub gdi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GdiRun {
    pub records: Vec<GdiRecord>,
    /// Countries with no embedded city in their top-k, or no other country to pair with.
    pub omitted: Vec<CountryCode>,
    /// Top-k cities without an embedding.
    pub missing_embeddings: Vec<u64>,
    /// Normalization maximum per continent (all equal under the global scope).
    pub reference_max_km: BTreeMap<Continent, f64>,
}

/// Precomputed distances over an analysis city set.
pub struct GdiInputs<'a> {
    pub cities: Vec<&'a City>,
    pub geo: GeoDistanceMatrix,
    pub sem: PairMatrix,
    pub missing_embeddings: Vec<u64>,
}

/// Selects the top-k cities of every country that have an embedding and
/// computes both distance matrices over them.
pub fn gdi_inputs<'g>(g: &'g Gazetteer, sem: &EmbeddingSet, top_k: usize, exec: Execution) -> Result<GdiInputs<'g>> {
    if top_k == 0 {
        return Err(Error::domain("top_k must be at least 1"));
    }
    let (cities, missing): (Vec<&City>, Vec<&City>) = g
        .top_k_union(top_k)
        .into_iter()
        .partition(|c| sem.contains(c.geoname_id));
    let geo = distance_matrix_with(&cities, exec)?;
    let keys: Vec<u64> = cities.iter().map(|c| c.geoname_id).collect();
    let sem = semantic_distance_matrix_with(sem, &keys, exec)?;
    Ok(GdiInputs {
        cities,
        geo,
        sem,
        missing_embeddings: missing.iter().map(|c| c.geoname_id).collect(),
    })
}

fn reference_max(cities: &[&City], geo: &PairMatrix, scope: GeoNormScope) -> BTreeMap<Continent, f64> {
    let global = geo.max_off_diagonal();
    let mut out: BTreeMap<Continent, f64> = BTreeMap::new();
    for (i, c) in cities.iter().enumerate() {
        let v = match scope {
            GeoNormScope::Global => global,
            GeoNormScope::Continent => geo.row(i).iter().copied().fold(0.0, f64::max),
        };
        let slot = out.entry(c.continent).or_insert(0.0);
        *slot = slot.max(v);
    }
    out
}

/// Per-country GDI over all (own city, other-country city) pairs of the analysis set.
pub fn gdi_by_country(g: &Gazetteer, sem: &EmbeddingSet, opts: GdiOptions, exec: Execution) -> Result<GdiRun> {
    let inputs = gdi_inputs(g, sem, opts.top_k, exec)?;
    gdi_for_gazetteer(g, &inputs, opts, exec)
}

/// [`gdi_from_inputs`] plus the bookkeeping of countries and cities the
/// inputs left out.
pub fn gdi_for_gazetteer(g: &Gazetteer, inputs: &GdiInputs<'_>, opts: GdiOptions, exec: Execution) -> Result<GdiRun> {
    let mut run = gdi_from_inputs(inputs, opts, exec)?;
    let present: std::collections::BTreeSet<CountryCode> = inputs.cities.iter().map(|c| c.country_code).collect();
    run.omitted.extend(g.countries().filter(|c| !present.contains(c)));
    run.omitted.sort();
    run.omitted.dedup();
    run.missing_embeddings = inputs.missing_embeddings.clone();
    Ok(run)
}

/// GDI over precomputed distance matrices. Matrix entries are looked up by
/// city key, so matrices may cover a superset of `inputs.cities`.
pub fn gdi_from_inputs(inputs: &GdiInputs<'_>, opts: GdiOptions, exec: Execution) -> Result<GdiRun> {
    let cities = &inputs.cities;
    let geo_idx: Vec<usize> = cities
        .iter()
        .map(|c| {
            inputs
                .geo
                .matrix()
                .index_of(c.geoname_id)
                .ok_or(Error::MissingKey(c.geoname_id))
        })
        .collect::<Result<_>>()?;
    let sem_idx: Vec<usize> = cities
        .iter()
        .map(|c| inputs.sem.index_of(c.geoname_id).ok_or(Error::MissingKey(c.geoname_id)))
        .collect::<Result<_>>()?;
    // restrict the geo matrix to the analysis set before taking maxima
    let local_geo = PairMatrix::from_fn(
        cities.iter().map(|c| c.geoname_id).collect(),
        Execution::Sequential,
        |i, j| inputs.geo.matrix().at(geo_idx[i], geo_idx[j]),
    )?;
    let refs = reference_max(cities, &local_geo, opts.norm_scope);

    let mut by_country: BTreeMap<CountryCode, Vec<usize>> = BTreeMap::new();
    for (i, c) in cities.iter().enumerate() {
        by_country.entry(c.country_code).or_default().push(i);
    }
    let countries: Vec<(CountryCode, Vec<usize>)> = by_country.into_iter().collect();

    let results = map_slice(exec, &countries, |(code, own)| -> Result<Option<GdiRecord>> {
        let continent = cities[own[0]].continent;
        let reference = refs[&continent];
        let (mut sum_sem, mut sum_geo, mut sum_gdi, mut n) = (0.0, 0.0, 0.0, 0usize);
        for &i in own {
            for (j, other) in cities.iter().enumerate() {
                if other.country_code == *code {
                    continue;
                }
                let d_sem = inputs.sem.at(sem_idx[i], sem_idx[j]);
                let d_geo = normalize_geo(local_geo.at(i, j), reference)?;
                sum_sem += d_sem;
                sum_geo += d_geo;
                sum_gdi += gdi_pair(d_sem, d_geo)?;
                n += 1;
            }
        }
        if n == 0 {
            return Ok(None);
        }
        let nf = n as f64;
        let (mean_d_sem, mean_d_geo_norm) = (sum_sem / nf, sum_geo / nf);
        let gdi = match opts.aggregation {
            GdiAggregation::MeanOfRatios => sum_gdi / nf,
            GdiAggregation::RatioOfMeans => gdi_pair(mean_d_sem, mean_d_geo_norm)?,
        };
        Ok(Some(GdiRecord {
            country_code: *code,
            continent,
            n_cities: own.len(),
            n_pairs: n,
            mean_d_sem,
            mean_d_geo_norm,
            gdi,
        }))
    });

    let mut run = GdiRun {
        records: Vec::new(),
        omitted: Vec::new(),
        missing_embeddings: Vec::new(),
        reference_max_km: refs,
    };
    for ((code, _), r) in countries.iter().zip(results) {
        match r? {
            Some(rec) => run.records.push(rec),
            None => run.omitted.push(*code),
        }
    }
    Ok(run)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GdiContinentRow {
    pub countries: usize,
    /// Unweighted mean of member-country GDI.
    pub mean: Option<f64>,
    pub farthest: usize,
    pub nearest: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GdiTable {
    pub continents: BTreeMap<Continent, GdiContinentRow>,
    /// Largest GDI first.
    pub farthest: Vec<CountryCode>,
    /// Smallest GDI first.
    pub nearest: Vec<CountryCode>,
    pub group_size: usize,
    /// Whether equal GDI values straddle a group boundary, so membership
    /// was decided by country code.
    pub ties_at_boundary: bool,
}

impl GdiTable {
    pub fn row(&self, c: Continent) -> GdiContinentRow {
        self.continents.get(&c).cloned().unwrap_or_default()
    }
}

/// Continent means plus the farthest and nearest groups. Countries are
/// ranked by `(gdi, country_code)` ascending; the nearest group is the head
/// of that ranking and the farthest group its tail, each of size
/// `min(20, n / 2)` so the groups never overlap.
pub fn gdi_table(records: &[GdiRecord]) -> Result<GdiTable> {
    if records.is_empty() {
        return Err(Error::domain("no GDI records"));
    }
    let mut ranked: Vec<&GdiRecord> = records.iter().collect();
    ranked.sort_by(|a, b| a.gdi.total_cmp(&b.gdi).then(a.country_code.cmp(&b.country_code)));
    let n = ranked.len();
    let k = EXTREME_GROUP_SIZE.min(n / 2);
    let nearest: Vec<CountryCode> = ranked[..k].iter().map(|r| r.country_code).collect();
    let farthest: Vec<CountryCode> = ranked[n - k..].iter().rev().map(|r| r.country_code).collect();
    let tie_at = |inside: usize, outside: usize| ranked[inside].gdi == ranked[outside].gdi;
    let ties_at_boundary = k > 0 && k < n && (tie_at(k - 1, k) || tie_at(n - k, n - k - 1));

    let mut continents: BTreeMap<Continent, GdiContinentRow> = BTreeMap::new();
    let mut sums: HashMap<Continent, f64> = HashMap::new();
    // sum in country-code order so the means do not depend on input order
    let mut by_code: Vec<&GdiRecord> = records.iter().collect();
    by_code.sort_by_key(|r| r.country_code);
    for r in by_code {
        continents.entry(r.continent).or_default().countries += 1;
        *sums.entry(r.continent).or_default() += r.gdi;
    }
    for (k, row) in continents.iter_mut() {
        row.mean = Some(sums[k] / row.countries as f64);
    }
    let continent_of: HashMap<CountryCode, Continent> = records.iter().map(|r| (r.country_code, r.continent)).collect();
    for c in &farthest {
        continents.get_mut(&continent_of[c]).unwrap().farthest += 1;
    }
    for c in &nearest {
        continents.get_mut(&continent_of[c]).unwrap().nearest += 1;
    }
    Ok(GdiTable {
        continents,
        farthest,
        nearest,
        group_size: k,
        ties_at_boundary,
    })
}

/// Whether two tables disagree on farthest or nearest membership.
pub fn extremes_differ(a: &GdiTable, b: &GdiTable) -> bool {
    let set = |v: &[CountryCode]| v.iter().copied().collect::<std::collections::BTreeSet<_>>();
    set(&a.farthest) != set(&b.farthest) || set(&a.nearest) != set(&b.nearest)
}
