//! Great-circle distance and distance normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gazetteer::City;
use crate::matrix::PairMatrix;

/// IUGG mean Earth radius.
pub const EARTH_MEAN_RADIUS_KM: f64 = 6371.0088;

/// Half the equatorial circumference used as the sanity ceiling for any
/// great-circle distance.
pub const HALF_CIRCUMFERENCE_KM: f64 = 20_037.6;

/// A point in decimal degrees, validated on construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    lat: f64,
    lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::domain(format!("coordinate ({lat}, {lon}) out of bounds")));
        }
        Ok(LatLon { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl From<&City> for LatLon {
    fn from(c: &City) -> Self {
        // City coordinates are range-checked at load time
        LatLon {
            lat: c.latitude,
            lon: c.longitude,
        }
    }
}

/// Haversine distance on a sphere of radius [`EARTH_MEAN_RADIUS_KM`].
///
/// Coordinate differences enter only through `|Δ|` and the cosine product
/// is commutative, so `haversine_km(a, b) == haversine_km(b, a)` exactly.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = (a.lat - b.lat).abs().to_radians();
    let dlon = (a.lon - b.lon).abs().to_radians();
    let s_lat = (dlat / 2.0).sin();
    let s_lon = (dlon / 2.0).sin();
    let h = s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon;
    2.0 * EARTH_MEAN_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Pairwise great-circle distances between cities.
#[derive(Clone, Debug, PartialEq)]
pub struct GeoDistanceMatrix {
    matrix: PairMatrix,
    max_km: f64,
}

impl GeoDistanceMatrix {
    pub fn keys(&self) -> &[u64] {
        self.matrix.keys()
    }

    pub fn matrix(&self) -> &PairMatrix {
        &self.matrix
    }

    pub fn max_km(&self) -> f64 {
        self.max_km
    }

    pub fn distance_km(&self, a: u64, b: u64) -> Result<f64> {
        self.matrix.get(a, b)
    }
}

pub fn distance_matrix(cities: &[&City]) -> Result<GeoDistanceMatrix> {
    distance_matrix_with(cities, Execution::default())
}

pub fn distance_matrix_with(cities: &[&City], exec: Execution) -> Result<GeoDistanceMatrix> {
    if cities.len() < 2 {
        return Err(Error::domain("distance matrix needs at least two cities"));
    }
    let points: Vec<LatLon> = cities.iter().map(|&c| LatLon::from(c)).collect();
    let keys = cities.iter().map(|c| c.geoname_id).collect();
    let matrix = PairMatrix::from_fn(keys, exec, |i, j| haversine_km(points[i], points[j]))?;
    let max_km = matrix.max_off_diagonal();
    Ok(GeoDistanceMatrix { matrix, max_km })
}

/// `d_km / reference_max_km`, for distances drawn from the reference set.
pub fn normalize_geo(d_km: f64, reference_max_km: f64) -> Result<f64> {
    if reference_max_km.is_nan() || reference_max_km <= 0.0 {
        return Err(Error::domain(format!(
            "reference distance {reference_max_km} must be positive"
        )));
    }
    if !(0.0..=reference_max_km).contains(&d_km) {
        return Err(Error::domain(format!(
            "distance {d_km} km outside [0, {reference_max_km}] of the reference set"
        )));
    }
    Ok(d_km / reference_max_km)
}

/// Which city set supplies the normalization maximum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeoNormScope {
    /// Maximum over every pair in the analysis set.
    #[default]
    Global,
    /// Per source continent: maximum over pairs with a source city in that continent.
    Continent,
}

impl std::str::FromStr for GeoNormScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(GeoNormScope::Global),
            "continent" => Ok(GeoNormScope::Continent),
            _ => Err(Error::domain(format!("unknown geo normalization `{s}`"))),
        }
    }
}

impl std::fmt::Display for GeoNormScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeoNormScope::Global => "global",
            GeoNormScope::Continent => "continent",
        })
    }
}
