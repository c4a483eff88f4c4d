//! End-to-end execution of the configured indicators.
//!
//! Every model gets its own output directory holding its tables, maps and a
//! `manifest.json`. An indicator that fails records an error in the model's
//! manifest; the remaining indicators and models still run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use geodistort::distortion::{
    extremes_differ, gdi_for_gazetteer, gdi_inputs, gdi_table, regression_table, GdiAggregation, GdiOptions,
};
use geodistort::embedstore::{load_embeddings, semantic_distance_matrix_with, EmbeddingManifest, EmbeddingSet};
use geodistort::exec::{map_slice, Execution};
use geodistort::geomath::distance_matrix_with;
use geodistort::probekit::{
    aggregate_accuracy, generate_probes, masked_unreachable, read_responses, score_all, write_jsonl, AliasTable,
};
use geodistort::report::{
    accuracy_table_with_counts, emit_choropleth, emit_table, gdi_country_table, gdi_summary_table,
    regression_detail_table, regression_summary_table, sha256_hex, vocab_country_table, vocab_table, ManifestConfig,
    RunManifest, Table, TableFormat,
};
use geodistort::vocabscan::{load_vocabulary, scan_cities_with};
use geodistort::{
    load_gazetteer, City, ContinentTable, CountryCode, Gazetteer, LoadOptions, LoadReport, ProbeFamily, VocabFormat,
};

use crate::config::{AuditConfig, Indicator, ModelEntry};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOAD_REPORT_FILE: &str = "load_report.txt";

/// A gazetteer together with the hash of the bytes it was read from.
pub struct LoadedGazetteer {
    pub gazetteer: Gazetteer,
    pub report: LoadReport,
    pub sha256: String,
}

fn display_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn load_gazetteer_file(path: &Path, min_population: u64) -> Result<LoadedGazetteer> {
    let bytes = fs::read(path).with_context(|| format!("reading gazetteer `{}`", display_name(path)))?;
    let (gazetteer, report) = load_gazetteer(bytes.as_slice(), &LoadOptions::with_min_population(min_population))
        .with_context(|| format!("loading gazetteer `{}`", display_name(path)))?;
    Ok(LoadedGazetteer {
        gazetteer,
        report,
        sha256: sha256_hex(&bytes),
    })
}

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifests: Vec<RunManifest>,
}

impl RunOutcome {
    pub fn error_count(&self) -> usize {
        self.manifests.iter().map(|m| m.errors.len()).sum()
    }
}

fn vocab_format_for(m: &ModelEntry, path: &Path) -> VocabFormat {
    m.vocab_format
        .unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some("json") => VocabFormat::TokenIdMap,
            _ => VocabFormat::TokenPerLine,
        })
}

fn base_manifest(cfg: &AuditConfig, loaded: &LoadedGazetteer, model_id: &str) -> RunManifest {
    RunManifest {
        toolkit_version: geodistort::VERSION.to_owned(),
        gazetteer_sha256: loaded.sha256.clone(),
        continent_table_version: ContinentTable::bundled().version().to_owned(),
        alias_table_version: AliasTable::bundled().version().to_owned(),
        model_id: model_id.to_owned(),
        indicators: cfg.indicators.iter().map(|i| i.to_string()).collect(),
        timestamp: cfg.timestamp(),
        ..Default::default()
    }
}

/// Executes every configured model. Fails only if the gazetteer cannot be
/// loaded or the output directory cannot be written.
pub fn run(cfg: &AuditConfig, exec: Execution) -> Result<RunOutcome> {
    cfg.validate()?;
    let gz_path = cfg
        .gazetteer
        .as_deref()
        .ok_or_else(|| anyhow!("no gazetteer configured"))?;
    let out_dir = cfg
        .out
        .clone()
        .ok_or_else(|| anyhow!("no output directory configured"))?;
    let loaded = load_gazetteer_file(gz_path, cfg.thresholds.gazetteer)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(out_dir.join(LOAD_REPORT_FILE), loaded.report.render())?;

    let results = map_slice(exec, &cfg.models, |m| {
        ModelRun::new(cfg, &loaded, m, &out_dir, exec).execute()
    });
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }

    flag_extraction_differences(&mut runs);
    let mut manifests = Vec::with_capacity(runs.len());
    for run in runs {
        let mut manifest = run.manifest;
        manifest.artifacts.push(MANIFEST_FILE.to_owned());
        fs::write(run.dir.join(MANIFEST_FILE), manifest.to_json()?)?;
        manifests.push(manifest);
    }
    Ok(RunOutcome { out_dir, manifests })
}

fn flag_extraction_differences(runs: &mut [FinishedModel]) {
    let manifests: Vec<(String, EmbeddingManifest)> = runs
        .iter()
        .filter_map(|r| r.embeddings.clone().map(|e| (r.manifest.model_id.clone(), e)))
        .collect();
    for run in runs.iter_mut() {
        let Some(mine) = &run.embeddings else { continue };
        for (other_id, other) in &manifests {
            if *other_id != run.manifest.model_id && mine.differs_in_extraction(other) {
                run.manifest.warnings.push(format!(
                    "embeddings: extraction settings differ from model `{other_id}` \
                     (pooling {}/{}, layer {}/{}); cross-model comparisons are indicative only",
                    mine.pooling, other.pooling, mine.layer, other.layer
                ));
            }
        }
    }
}

struct FinishedModel {
    dir: PathBuf,
    manifest: RunManifest,
    embeddings: Option<EmbeddingManifest>,
}

struct ModelRun<'a> {
    cfg: &'a AuditConfig,
    g: &'a Gazetteer,
    model: &'a ModelEntry,
    dir: PathBuf,
    exec: Execution,
    manifest: RunManifest,
}

impl<'a> ModelRun<'a> {
    fn new(
        cfg: &'a AuditConfig,
        loaded: &'a LoadedGazetteer,
        model: &'a ModelEntry,
        out: &Path,
        exec: Execution,
    ) -> Self {
        let mut manifest = base_manifest(cfg, loaded, &model.id);
        manifest.artifacts.push(format!("../{LOAD_REPORT_FILE}"));
        manifest.config = ManifestConfig {
            geo_norm: cfg.geo_norm.to_string(),
            gdi_aggregation: cfg.gdi_agg.to_string(),
            casing: model
                .vocab
                .as_ref()
                .map(|_| model.casing.unwrap_or_default().to_string()),
            vocab_format: model.vocab.as_ref().map(|p| {
                serde_json::to_value(vocab_format_for(model, p))
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default()
            }),
            vocab_min_population: cfg.thresholds.vocab,
            corr_min_population: cfg.thresholds.corr,
            gdi_top_k: cfg.thresholds.gdi_top_k,
        };
        ModelRun {
            cfg,
            g: &loaded.gazetteer,
            model,
            dir: out.join(&model.id),
            exec,
            manifest,
        }
    }

    fn execute(mut self) -> Result<FinishedModel> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let wanted: BTreeSet<Indicator> = self.cfg.indicators.iter().copied().collect();
        let mut embeddings: Option<Result<EmbeddingSet>> = None;
        for indicator in Indicator::ALL.into_iter().filter(|i| wanted.contains(i)) {
            let outcome = match indicator {
                Indicator::Accuracy => self.accuracy(),
                Indicator::Vocab => self.vocab(),
                Indicator::Corr | Indicator::Gdi => {
                    if self.model.embeddings.is_none() {
                        self.manifest
                            .warnings
                            .push(format!("{indicator}: no embeddings configured; skipped"));
                        continue;
                    }
                    let set = embeddings.get_or_insert_with(|| self.load_embeddings());
                    match set {
                        Ok(set) => {
                            let set = set.clone();
                            if indicator == Indicator::Corr {
                                self.corr(&set)
                            } else {
                                self.gdi(&set)
                            }
                        }
                        Err(e) => Err(anyhow!("{e:#}")),
                    }
                }
            };
            if let Err(e) = outcome {
                log::error!("{}: {indicator}: {e:#}", self.model.id);
                self.manifest.errors.push(format!("{indicator}: {e:#}"));
            }
        }
        let embeddings = match embeddings {
            Some(Ok(set)) => Some(set.manifest().clone()),
            _ => None,
        };
        Ok(FinishedModel {
            dir: self.dir,
            manifest: self.manifest,
            embeddings,
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents).with_context(|| format!("writing {name}"))?;
        self.manifest.artifacts.push(name.to_owned());
        Ok(())
    }

    fn write_table(&mut self, stem: &str, table: &Table) -> Result<()> {
        for &format in &self.cfg.formats {
            let text = emit_table(table, format)?;
            self.write(&format!("{stem}.{}", format.extension()), &text)?;
        }
        Ok(())
    }

    fn write_choropleth(&mut self, stem: &str, values: &BTreeMap<CountryCode, f64>, metric: &str) -> Result<()> {
        let map = emit_choropleth(values, metric);
        for w in map.warnings {
            self.manifest.warnings.push(format!("{stem}.geojson: {w}"));
        }
        self.write(&format!("{stem}.geojson"), &map.geojson)
    }

    fn warn(&mut self, indicator: Indicator, msg: impl std::fmt::Display) {
        self.manifest.warnings.push(format!("{indicator}: {msg}"));
    }

    fn accuracy(&mut self) -> Result<()> {
        let Some(path) = self.model.probe_responses.clone() else {
            self.warn(Indicator::Accuracy, "no probe responses configured; skipped");
            return Ok(());
        };
        let family = self
            .model
            .family
            .ok_or_else(|| anyhow!("model has probe responses but no probe family"))?;
        let specs = generate_probes(self.g, family);
        if specs.is_empty() {
            bail!("gazetteer has no national capitals to probe");
        }
        let file = File::open(&path).with_context(|| format!("opening probe responses `{}`", display_name(&path)))?;
        let (responses, dup_warnings) = read_responses(BufReader::new(file))?;
        for w in dup_warnings {
            self.warn(Indicator::Accuracy, w);
        }
        let aliases = AliasTable::bundled();
        let batch = score_all(&specs, &responses, aliases, self.exec);
        if !batch.missing_responses.is_empty() {
            let msg = format!(
                "{} probes had no response and were scored unmatched: {}",
                batch.missing_responses.len(),
                batch.missing_responses.join(", ")
            );
            self.warn(Indicator::Accuracy, msg);
        }
        if !batch.unknown_responses.is_empty() {
            let msg = format!(
                "{} responses match no probe and were ignored: {}",
                batch.unknown_responses.len(),
                batch.unknown_responses.join(", ")
            );
            self.warn(Indicator::Accuracy, msg);
        }
        if family == ProbeFamily::Masked {
            let unreachable = masked_unreachable(&specs, aliases);
            if !unreachable.is_empty() {
                let codes: Vec<String> = unreachable.iter().map(|c| c.to_string()).collect();
                let msg = format!(
                    "{} countries have no single-token name and cannot be answered by a single mask: {}",
                    codes.len(),
                    codes.join(", ")
                );
                self.warn(Indicator::Accuracy, msg);
            }
        }
        let table = aggregate_accuracy(&batch.scores, self.g)?;
        let mut scores = Vec::new();
        write_jsonl(&batch.scores, &mut scores)?;
        self.write("probe_scores.jsonl", std::str::from_utf8(&scores)?)?;
        self.write_table("accuracy", &accuracy_table_with_counts(&self.model.id, &table))?;
        let values = batch
            .scores
            .iter()
            .map(|s| (s.expected_country_code, if s.matched { 1.0 } else { 0.0 }))
            .collect();
        self.write_choropleth("accuracy", &values, "capital_correct")
    }

    fn vocab(&mut self) -> Result<()> {
        let Some(path) = self.model.vocab.clone() else {
            self.warn(Indicator::Vocab, "no vocabulary configured; skipped");
            return Ok(());
        };
        let format = vocab_format_for(self.model, &path);
        let casing = self.model.casing.unwrap_or_default();
        let file = File::open(&path).with_context(|| format!("opening vocabulary `{}`", display_name(&path)))?;
        let v = load_vocabulary(BufReader::new(file), format, casing, &self.model.id)?;
        let cities = self.g.with_min_population(self.cfg.thresholds.vocab);
        let cov = scan_cities_with(&v, &cities, self.exec)?;
        let unmarked: Vec<&str> = cov
            .cities
            .iter()
            .filter(|c| c.via_unmarked_token)
            .map(|c| c.ascii_name.as_str())
            .collect();
        if !unmarked.is_empty() {
            let msg = format!(
                "{} cities matched only a token without a word-start marker: {}",
                unmarked.len(),
                unmarked.join(", ")
            );
            self.warn(Indicator::Vocab, msg);
        }
        self.write_table("vocab", &vocab_table(&[(&self.model.id, &cov)]))?;
        let g = self.g;
        self.write_table("vocab_countries", &vocab_country_table(&cov, |c| g.continent_of(c)))?;
        let values = cov
            .countries
            .iter()
            .filter_map(|(c, cell)| cell.percentage().map(|p| (*c, p)))
            .collect();
        self.write_choropleth("vocab", &values, "vocab_city_coverage_pct")
    }

    fn load_embeddings(&self) -> Result<EmbeddingSet> {
        let manifest = self.model.embeddings.as_ref().expect("checked by caller");
        let data = self.model.embeddings_data_path().expect("derived from manifest path");
        let m =
            File::open(manifest).with_context(|| format!("opening embedding manifest `{}`", display_name(manifest)))?;
        let d = File::open(&data).with_context(|| format!("opening embedding data `{}`", display_name(&data)))?;
        Ok(load_embeddings(BufReader::new(m), BufReader::new(d))?)
    }

    fn corr(&mut self, set: &EmbeddingSet) -> Result<()> {
        let qualifying = self.g.with_min_population(self.cfg.thresholds.corr);
        let (cities, missing): (Vec<&City>, Vec<&City>) =
            qualifying.into_iter().partition(|c| set.contains(c.geoname_id));
        if !missing.is_empty() {
            let ids: Vec<String> = missing.iter().map(|c| c.geoname_id.to_string()).collect();
            let msg = format!("{} qualifying cities have no embedding: {}", ids.len(), ids.join(", "));
            self.warn(Indicator::Corr, msg);
        }
        let geo = distance_matrix_with(&cities, self.exec)?;
        let keys: Vec<u64> = cities.iter().map(|c| c.geoname_id).collect();
        let sem = semantic_distance_matrix_with(set, &keys, self.exec)?;
        let table = regression_table(&cities, &geo, &sem, self.exec)?;
        for o in &table.omitted {
            let msg = format!("{} omitted: {}", o.continent.label(), o.reason);
            self.warn(Indicator::Corr, msg);
        }
        self.write_table("corr", &regression_summary_table(&[(&self.model.id, &table)]))?;
        self.write_table("corr_detail", &regression_detail_table(&table))
    }

    fn gdi(&mut self, set: &EmbeddingSet) -> Result<()> {
        let opts = GdiOptions {
            top_k: self.cfg.thresholds.gdi_top_k,
            aggregation: self.cfg.gdi_agg,
            norm_scope: self.cfg.geo_norm,
        };
        let inputs = gdi_inputs(self.g, set, opts.top_k, self.exec)?;
        let run = gdi_for_gazetteer(self.g, &inputs, opts, self.exec)?;
        if !run.missing_embeddings.is_empty() {
            let ids: Vec<String> = run.missing_embeddings.iter().map(|k| k.to_string()).collect();
            let msg = format!(
                "{} top-{} cities have no embedding: {}",
                ids.len(),
                opts.top_k,
                ids.join(", ")
            );
            self.warn(Indicator::Gdi, msg);
        }
        if !run.omitted.is_empty() {
            let codes: Vec<String> = run.omitted.iter().map(|c| c.to_string()).collect();
            let msg = format!(
                "{} countries omitted (no embedded city or nothing to pair with): {}",
                codes.len(),
                codes.join(", ")
            );
            self.warn(Indicator::Gdi, msg);
        }
        let table = gdi_table(&run.records)?;
        if table.ties_at_boundary {
            self.warn(
                Indicator::Gdi,
                "equal GDI values straddle a farthest/nearest boundary; membership decided by country code",
            );
        }
        let other = match opts.aggregation {
            GdiAggregation::MeanOfRatios => GdiAggregation::RatioOfMeans,
            GdiAggregation::RatioOfMeans => GdiAggregation::MeanOfRatios,
        };
        let alt = gdi_for_gazetteer(
            self.g,
            &inputs,
            GdiOptions {
                aggregation: other,
                ..opts
            },
            self.exec,
        )?;
        if extremes_differ(&table, &gdi_table(&alt.records)?) {
            self.warn(
                Indicator::Gdi,
                format!("aggregating with {other} changes the farthest/nearest country sets"),
            );
        }
        self.write_table("gdi", &gdi_summary_table(&[(&self.model.id, &table)]))?;
        self.write_table("gdi_countries", &gdi_country_table(&run.records, &table))?;
        let values = run.records.iter().map(|r| (r.country_code, r.gdi)).collect();
        self.write_choropleth("gdi", &values, "gdi")
    }
}

/// Writes one probe file per family into `out/probes/`.
pub fn probe_gen(cfg: &AuditConfig, families: &[ProbeFamily]) -> Result<Vec<PathBuf>> {
    let gz_path = cfg
        .gazetteer
        .as_deref()
        .ok_or_else(|| anyhow!("no gazetteer configured"))?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| anyhow!("no output directory configured"))?
        .join("probes");
    let loaded = load_gazetteer_file(gz_path, cfg.thresholds.gazetteer)?;
    fs::create_dir_all(&out)?;
    let mut manifest = base_manifest(cfg, &loaded, "");
    manifest.indicators = vec!["probe-gen".to_owned()];
    let mut written = Vec::new();
    for &family in families {
        let specs = generate_probes(&loaded.gazetteer, family);
        if specs.is_empty() {
            bail!("gazetteer has no national capitals to probe");
        }
        let name = format!("{}.jsonl", family.as_str());
        let mut buf = Vec::new();
        write_jsonl(&specs, &mut buf)?;
        fs::write(out.join(&name), buf)?;
        manifest.artifacts.push(name);
        written.push(out.join(format!("{}.jsonl", family.as_str())));
    }
    manifest.artifacts.push(MANIFEST_FILE.to_owned());
    fs::write(out.join(MANIFEST_FILE), manifest.to_json()?)?;
    Ok(written)
}

const SUMMARY_TABLES: [&str; 4] = ["accuracy", "vocab", "corr", "gdi"];

/// Concatenates the per-model summary tables found under `out` into
/// `out/summary/`. Returns the names of the tables written.
pub fn report(out: &Path, formats: &[TableFormat]) -> Result<Vec<String>> {
    let mut model_dirs: Vec<PathBuf> = fs::read_dir(out)
        .with_context(|| format!("reading {}", out.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file() && p.file_name().is_some_and(|n| n != "summary" && n != "probes"))
        .collect();
    model_dirs.sort();
    if model_dirs.is_empty() {
        bail!("no model results under {}", out.display());
    }
    let summary_dir = out.join("summary");
    fs::create_dir_all(&summary_dir)?;
    let mut manifest = RunManifest {
        toolkit_version: geodistort::VERSION.to_owned(),
        indicators: vec!["report".to_owned()],
        ..Default::default()
    };
    let mut written = Vec::new();
    for name in SUMMARY_TABLES {
        let mut combined: Option<Table> = None;
        let mut count_row: Option<Vec<String>> = None;
        for dir in &model_dirs {
            let path = dir.join(format!("{name}.csv"));
            if !path.is_file() {
                continue;
            }
            let mut rdr = csv::Reader::from_path(&path)?;
            let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
            let table = combined.get_or_insert_with(|| Table {
                header: header.clone(),
                rows: Vec::new(),
            });
            if table.header != header {
                bail!("{} has a different header from the other models", path.display());
            }
            for rec in rdr.records() {
                let row: Vec<String> = rec?.iter().map(str::to_owned).collect();
                if row.first().is_some_and(|c| c == "Nb countries") {
                    count_row.get_or_insert(row);
                } else {
                    table.rows.push(row);
                }
            }
            let model_manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
            if manifest.gazetteer_sha256.is_empty() {
                manifest.gazetteer_sha256 = model_manifest.gazetteer_sha256.clone();
            } else if manifest.gazetteer_sha256 != model_manifest.gazetteer_sha256 {
                manifest.warnings.push(format!(
                    "{}: results come from a different gazetteer snapshot",
                    display_name(dir)
                ));
            }
            manifest.artifacts.push(format!("../{}/{name}.csv", display_name(dir)));
        }
        let Some(mut table) = combined else { continue };
        table.rows.extend(count_row);
        for &format in formats {
            let file = format!("{name}.{}", format.extension());
            fs::write(summary_dir.join(&file), emit_table(&table, format)?)?;
            manifest.artifacts.push(file.clone());
            written.push(file);
        }
    }
    manifest.artifacts.push(MANIFEST_FILE.to_owned());
    fs::write(summary_dir.join(MANIFEST_FILE), manifest.to_json()?)?;
    Ok(written)
}
