//! Argument parsing and subcommand dispatch.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use geodistort::distortion::GdiAggregation;
use geodistort::geomath::GeoNormScope;
use geodistort::report::TableFormat;
use geodistort::{Casing, Continent, Execution, ProbeFamily, VocabFormat};
use serde::de::DeserializeOwned;

use crate::config::{AuditConfig, Indicator, ModelEntry};
use crate::pipeline::{self, RunOutcome};

#[derive(Debug, Parser)]
#[command(
    name = "geodistort",
    version,
    about = "Measure geographic knowledge and distortion in language models"
)]
pub struct Cli {
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, short = 'j', global = true)]
    pub jobs: Option<usize>,

    /// More log output (repeatable).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors.
    #[arg(long, short = 'q', global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn log_level(&self) -> &'static str {
        match (self.quiet, self.verbose) {
            (true, _) => "error",
            (false, 0) => "warn",
            (false, 1) => "info",
            (false, _) => "debug",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect a gazetteer.
    #[command(subcommand)]
    Gazetteer(GazetteerCommand),
    /// Generate or score capital probes.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Vocabulary coverage of city names.
    #[command(subcommand)]
    Vocab(VocabCommand),
    /// Embedding-based distortion indicators.
    #[command(subcommand)]
    Distort(DistortCommand),
    /// Run every configured indicator for every configured model.
    Run(Common),
    /// Merge per-model summary tables into `<out>/summary/`.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// Table format (repeatable).
        #[arg(long = "format", value_parser = parse_enum::<TableFormat>)]
        formats: Vec<TableFormat>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GazetteerCommand {
    /// Print city and capital counts per continent.
    Stats(Common),
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Write probe files to `<out>/probes/`.
    Gen(Common),
    /// Score model responses against the capital probes.
    Score(Common),
}

#[derive(Debug, Subcommand)]
pub enum VocabCommand {
    Scan(Common),
}

#[derive(Debug, Subcommand)]
pub enum DistortCommand {
    /// Regression of semantic on geographic distance per continent.
    Corr(Common),
    /// Geographic distortion index per country.
    Gdi(Common),
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Default, Args)]
pub struct Common {
    /// TOML audit configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Model id; restricts a configured run to this model or names an ad hoc one.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_parser = parse_enum::<ProbeFamily>)]
    pub family: Option<ProbeFamily>,
    #[arg(long, value_parser = parse_enum::<Casing>)]
    pub casing: Option<Casing>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<VocabFormat>)]
    pub vocab_format: Option<VocabFormat>,
    /// Embedding manifest.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Embedding JSON Lines, if not next to the manifest.
    #[arg(long)]
    pub embeddings_data: Option<PathBuf>,
    /// Probe responses as JSON Lines.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<GeoNormScope>)]
    pub geo_norm: Option<GeoNormScope>,
    #[arg(long, value_parser = parse_enum::<GdiAggregation>)]
    pub gdi_agg: Option<GdiAggregation>,
    #[arg(long)]
    pub vocab_min_population: Option<u64>,
    #[arg(long)]
    pub corr_min_population: Option<u64>,
    #[arg(long)]
    pub gdi_top_k: Option<usize>,
    /// Recorded verbatim in the run manifests.
    #[arg(long)]
    pub timestamp: Option<String>,
    /// Table format (repeatable).
    #[arg(long = "format", value_parser = parse_enum::<TableFormat>)]
    pub formats: Vec<TableFormat>,
    /// Indicators to run, by name or number (repeatable; `run` only).
    #[arg(long = "indicator")]
    pub indicators: Vec<Indicator>,
}

/// Parses a value through its serde name, accepting `-` and `_` alike.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let lower = s.to_ascii_lowercase();
    for candidate in [lower.clone(), lower.replace('_', "-"), lower.replace('-', "_")] {
        if let Ok(v) = serde_json::from_value(serde_json::Value::String(candidate)) {
            return Ok(v);
        }
    }
    Err(format!("unrecognised value `{s}`"))
}

impl Common {
    fn has_model_inputs(&self) -> bool {
        self.family.is_some()
            || self.casing.is_some()
            || self.vocab.is_some()
            || self.vocab_format.is_some()
            || self.embeddings.is_some()
            || self.embeddings_data.is_some()
            || self.responses.is_some()
    }

    /// Loads the config file (if any) and applies the command-line overrides.
    pub fn resolve(&self) -> Result<AuditConfig> {
        let mut cfg = match &self.config {
            Some(p) => AuditConfig::from_file(p)?,
            None => AuditConfig::default(),
        };
        if let Some(p) = &self.gazetteer {
            cfg.gazetteer = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.out = Some(p.clone());
        }
        if let Some(v) = self.geo_norm {
            cfg.geo_norm = v;
        }
        if let Some(v) = self.gdi_agg {
            cfg.gdi_agg = v;
        }
        if let Some(v) = self.vocab_min_population {
            cfg.thresholds.vocab = v;
        }
        if let Some(v) = self.corr_min_population {
            cfg.thresholds.corr = v;
        }
        if let Some(v) = self.gdi_top_k {
            cfg.thresholds.gdi_top_k = v;
        }
        if let Some(v) = &self.timestamp {
            cfg.timestamp = Some(v.clone());
        }
        if !self.formats.is_empty() {
            cfg.formats = self.formats.clone();
        }
        if !self.indicators.is_empty() {
            cfg.indicators = self.indicators.clone();
        }

        if let Some(id) = &self.model {
            cfg.models.retain(|m| &m.id == id);
            if cfg.models.is_empty() {
                cfg.models.push(ModelEntry {
                    id: id.clone(),
                    ..Default::default()
                });
            }
        } else if self.has_model_inputs() {
            match cfg.models.len() {
                0 => bail!("--model is required when model inputs are given on the command line"),
                1 => {}
                _ => bail!("the config lists several models; choose one with --model"),
            }
        }
        if let Some(m) = cfg.models.first_mut() {
            macro_rules! set {
                ($field:ident, $value:expr) => {
                    if let Some(v) = $value {
                        m.$field = Some(v.clone());
                    }
                };
            }
            set!(family, &self.family);
            set!(casing, &self.casing);
            set!(vocab, &self.vocab);
            set!(vocab_format, &self.vocab_format);
            set!(embeddings, &self.embeddings);
            set!(embeddings_data, &self.embeddings_data);
            set!(probe_responses, &self.responses);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execution(jobs: Option<usize>) -> Result<(Execution, Option<rayon::ThreadPool>)> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(1) => Ok((Execution::Sequential, None)),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            Ok((Execution::Parallel, Some(pool)))
        }
        None => Ok((Execution::Parallel, None)),
    }
}

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    let (exec, pool) = execution(cli.jobs)?;
    let work = move || run_command(cli.command, exec);
    match pool {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

fn run_indicator(common: &Common, indicator: Indicator, exec: Execution) -> Result<ExitCode> {
    let mut cfg = common.resolve()?;
    cfg.indicators = vec![indicator];
    if cfg.models.is_empty() {
        bail!("no model configured; pass --model or a config with [[models]]");
    }
    finish(pipeline::run(&cfg, exec)?)
}

fn finish(outcome: RunOutcome) -> Result<ExitCode> {
    for m in &outcome.manifests {
        for w in &m.warnings {
            log::warn!("{}: {w}", m.model_id);
        }
        for e in &m.errors {
            eprintln!("error: {}: {e}", m.model_id);
        }
        println!(
            "{}: {} artifacts in {}",
            m.model_id,
            m.artifacts.len(),
            outcome.out_dir.join(&m.model_id).display()
        );
    }
    Ok(if outcome.error_count() == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_command(command: Command, exec: Execution) -> Result<ExitCode> {
    match command {
        Command::Gazetteer(GazetteerCommand::Stats(common)) => {
            let cfg = common.resolve()?;
            let path = cfg.gazetteer.ok_or_else(|| anyhow!("--gazetteer is required"))?;
            let loaded = pipeline::load_gazetteer_file(&path, cfg.thresholds.gazetteer)?;
            print!("{}", stats_text(&loaded));
            Ok(ExitCode::SUCCESS)
        }
        Command::Probe(ProbeCommand::Gen(mut common)) => {
            // here --family picks the probe files, it does not configure a model
            let family = common.family.take();
            let cfg = common.resolve()?;
            let families = match family {
                Some(f) => vec![f],
                None => vec![ProbeFamily::Masked, ProbeFamily::Chat],
            };
            for p in pipeline::probe_gen(&cfg, &families)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Probe(ProbeCommand::Score(common)) => run_indicator(&common, Indicator::Accuracy, exec),
        Command::Vocab(VocabCommand::Scan(common)) => run_indicator(&common, Indicator::Vocab, exec),
        Command::Distort(DistortCommand::Corr(common)) => run_indicator(&common, Indicator::Corr, exec),
        Command::Distort(DistortCommand::Gdi(common)) => run_indicator(&common, Indicator::Gdi, exec),
        Command::Run(common) => {
            let cfg = common.resolve()?;
            if cfg.models.is_empty() {
                bail!("no model configured");
            }
            finish(pipeline::run(&cfg, exec)?)
        }
        Command::Report { out, formats } => {
            let formats = if formats.is_empty() {
                vec![TableFormat::Csv, TableFormat::Markdown]
            } else {
                formats
            };
            for name in pipeline::report(&out, &formats)? {
                println!("{}", out.join("summary").join(name).display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

pub fn stats_text(loaded: &pipeline::LoadedGazetteer) -> String {
    use std::fmt::Write;
    let g = &loaded.gazetteer;
    let caps = g.capitals_by_continent();
    let mut s = String::new();
    let _ = writeln!(s, "gazetteer sha256: {}", loaded.sha256);
    let _ = writeln!(s, "cities: {}", g.len());
    let _ = writeln!(s, "countries: {}", g.countries().count());
    let _ = writeln!(s, "capitals: {}", caps.total());
    for c in Continent::ALL {
        let _ = writeln!(s, "  {}: {}", c.label(), caps.count(c));
    }
    s.push_str(&loaded.report.render());
    s
}
