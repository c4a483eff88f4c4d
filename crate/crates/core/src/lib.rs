//! Geographic-distortion audit toolkit for language models.
//!
//! The crate loads a GeoNames gazetteer and computes four indicators of how
//! well a model's internal representation of cities matches real geography:
//! capital-to-country probing accuracy, vocabulary coverage of city names,
//! the regression of embedding distance on great-circle distance, and the
//! per-country geographic distortion index.

pub mod country;
pub mod distortion;
pub mod embedstore;
pub mod error;
pub mod exec;
pub mod gazetteer;
pub mod geomath;
pub mod matrix;
pub mod probekit;
pub mod report;
pub mod vocabscan;

pub use country::{Continent, ContinentTable, CountryCode, Region};
pub use distortion::{GdiAggregation, GdiOptions, GdiRecord, GdiTable, RegressionResult, RegressionTable};
pub use embedstore::{load_embeddings, EmbeddingManifest, EmbeddingSet};
pub use error::{Error, Result};
pub use exec::Execution;
pub use gazetteer::{load_gazetteer, City, Gazetteer, LoadOptions, LoadReport};
pub use geomath::{haversine_km, normalize_geo, GeoNormScope, LatLon};
pub use matrix::PairMatrix;
pub use probekit::{AccuracyTable, AliasTable, ProbeFamily, ProbeSpec};
pub use report::{RunManifest, TableFormat};
pub use vocabscan::{Casing, VocabCoverage, VocabFormat, Vocabulary};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
