//! Audit configuration: a TOML file plus command-line overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use geodistort::distortion::GdiAggregation;
use geodistort::geomath::GeoNormScope;
use geodistort::report::TableFormat;
use geodistort::{Casing, ProbeFamily, VocabFormat};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Indicator {
    /// Capital → country probing accuracy.
    Accuracy,
    /// City names present in the vocabulary.
    Vocab,
    /// Regression of semantic on geographic distance.
    Corr,
    /// Geographic distortion index.
    Gdi,
}

impl Indicator {
    pub const ALL: [Indicator; 4] = [Indicator::Accuracy, Indicator::Vocab, Indicator::Corr, Indicator::Gdi];

    pub fn as_str(self) -> &'static str {
        match self {
            Indicator::Accuracy => "accuracy",
            Indicator::Vocab => "vocab",
            Indicator::Corr => "corr",
            Indicator::Gdi => "gdi",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Indicator {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "1" | "accuracy" => Indicator::Accuracy,
            "2" | "vocab" => Indicator::Vocab,
            "3" | "corr" => Indicator::Corr,
            "4" | "gdi" => Indicator::Gdi,
            _ => bail!("unknown indicator `{s}` (expected accuracy, vocab, corr, gdi or 1-4)"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Population floor applied while loading the gazetteer.
    pub gazetteer: u64,
    pub vocab: u64,
    pub corr: u64,
    pub gdi_top_k: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            gazetteer: 1000,
            vocab: 100_000,
            corr: 1_000_000,
            gdi_top_k: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub id: String,
    pub family: Option<ProbeFamily>,
    pub casing: Option<Casing>,
    pub vocab: Option<PathBuf>,
    pub vocab_format: Option<VocabFormat>,
    /// Embedding manifest.
    pub embeddings: Option<PathBuf>,
    /// Embedding JSON Lines; defaults to the manifest path with
    /// `.manifest.json` replaced by `.jsonl`.
    pub embeddings_data: Option<PathBuf>,
    pub probe_responses: Option<PathBuf>,
}

impl ModelEntry {
    pub fn embeddings_data_path(&self) -> Option<PathBuf> {
        if let Some(p) = &self.embeddings_data {
            return Some(p.clone());
        }
        let manifest = self.embeddings.as_ref()?;
        let name = manifest.file_name()?.to_str()?;
        let stem = name
            .strip_suffix(".manifest.json")
            .or_else(|| name.strip_suffix(".json"))
            .unwrap_or(name);
        Some(manifest.with_file_name(format!("{stem}.jsonl")))
    }

    fn paths(&self) -> Vec<PathBuf> {
        [
            &self.vocab,
            &self.embeddings,
            &self.embeddings_data,
            &self.probe_responses,
        ]
        .into_iter()
        .flatten()
        .cloned()
        .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub gazetteer: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub thresholds: Thresholds,
    pub geo_norm: GeoNormScope,
    pub gdi_agg: GdiAggregation,
    pub indicators: Vec<Indicator>,
    pub formats: Vec<TableFormat>,
    /// Recorded verbatim in every run manifest.
    pub timestamp: Option<String>,
    pub models: Vec<ModelEntry>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            gazetteer: None,
            out: None,
            thresholds: Thresholds::default(),
            geo_norm: GeoNormScope::default(),
            gdi_agg: GdiAggregation::default(),
            indicators: Indicator::ALL.to_vec(),
            formats: vec![TableFormat::Csv, TableFormat::Markdown],
            timestamp: None,
            models: Vec::new(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl AuditConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = AuditConfig::parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.gazetteer);
        rebase(base, &mut cfg.out);
        for m in &mut cfg.models {
            rebase(base, &mut m.vocab);
            rebase(base, &mut m.embeddings);
            rebase(base, &mut m.embeddings_data);
            rebase(base, &mut m.probe_responses);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if t.vocab == 0 || t.corr == 0 {
            bail!("population thresholds must be positive");
        }
        if t.gdi_top_k == 0 {
            bail!("gdi_top_k must be at least 1");
        }
        if self.formats.is_empty() {
            bail!("at least one table format is required");
        }
        let mut ids = BTreeSet::new();
        for m in &self.models {
            if m.id.is_empty() || !m.id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c)) {
                bail!("model id `{}` must be non-empty and use only [A-Za-z0-9._-]", m.id);
            }
            if !ids.insert(m.id.as_str()) {
                bail!("model id `{}` appears twice", m.id);
            }
            let paths = m.paths();
            let distinct: BTreeSet<&PathBuf> = paths.iter().collect();
            if distinct.len() != paths.len() {
                bail!("model `{}` points two inputs at the same file", m.id);
            }
        }
        Ok(())
    }

    pub fn timestamp(&self) -> String {
        self.timestamp.clone().unwrap_or_else(|| "unspecified".to_owned())
    }
}
