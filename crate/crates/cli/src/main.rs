//! `newsgravity`: batch front end for building news cubes, fitting the
//! gravity model and analysing the fits.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use newsgravity::covariates::{ModelSpec, OffsetMode, Term};
use newsgravity::{Family, Layer};
use serde::Serialize;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "newsgravity", version, about = "Gravity models of international news flows")]
struct Cli {
    /// Worker threads for independent fits (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest news items into the media x week x country cube.
    Build(BuildArgs),
    /// Fit the model globally, per week, per media, or compare families.
    Fit(FitArgs),
    /// Residual salience, coverage series, PCA and clustering of fits.
    Analyze(AnalyzeArgs),
    /// Draw a synthetic cube from known parameters.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Window {
    /// First Monday of the observation window.
    #[arg(long, default_value = "2015-01-05")]
    pub start: NaiveDate,
    #[arg(long, default_value_t = 52)]
    pub weeks: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Tables {
    #[arg(long)]
    pub countries: Option<PathBuf>,
    #[arg(long)]
    pub dyads: Option<PathBuf>,
    #[arg(long)]
    pub media: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Model {
    #[arg(long, default_value = "weighted", value_parser = parse_layer)]
    pub layer: Layer,
    #[arg(long, default_value = "negbin", value_parser = parse_family)]
    pub family: Family,
    /// Keep each outlet's coverage of its own country.
    #[arg(long)]
    pub include_home: bool,
    #[arg(long)]
    pub no_kickoff: bool,
    /// Estimate the log volume coefficient instead of fixing it at one.
    #[arg(long)]
    pub estimate_offset: bool,
    /// Comma-separated subset of model terms.
    #[arg(long)]
    pub terms: Option<String>,
}

impl Model {
    pub fn spec(&self) -> Result<ModelSpec, CliError> {
        let mut terms = match &self.terms {
            Some(s) => ModelSpec::parse_terms(s).map_err(|e| CliError::input("config", e.to_string()))?,
            None => Term::ALL.to_vec(),
        };
        if self.no_kickoff {
            terms.retain(|t| *t != Term::Kickoff);
        }
        let spec = ModelSpec {
            terms,
            family: self.family,
            response_layer: self.layer,
            include_home: self.include_home,
            offset_mode: if self.estimate_offset { OffsetMode::Estimated } else { OffsetMode::Fixed },
        };
        spec.validate().map_err(|e| CliError::input("config", e.to_string()))?;
        Ok(spec)
    }
}

fn parse_layer(s: &str) -> Result<Layer, String> {
    s.parse().map_err(|e: newsgravity::newscube::CubeError| e.to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: newsgravity::GlmError| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildArgs {
    /// News items as JSONL (`.jsonl`, `.json`, `.ndjson`) or CSV.
    #[arg(long)]
    pub items: PathBuf,
    #[command(flatten)]
    pub tables: Tables,
    #[command(flatten)]
    pub window: Window,
    /// Drop unknown country codes instead of rejecting the item.
    #[arg(long)]
    pub drop_unknown_countries: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    Global,
    #[value(name = "by_week", alias = "by-week")]
    ByWeek,
    #[value(name = "by_media", alias = "by-media")]
    ByMedia,
    Select,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value = "global")]
    pub scope: FitScope,
    /// Build the cube from these items instead of reading `<out>/cube.csv`.
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[command(flatten)]
    pub tables: Tables,
    #[command(flatten)]
    pub window: Window,
    #[command(flatten)]
    pub model: Model,
    /// Known log offsets (`media,week,offset`), as written by `simulate`.
    #[arg(long)]
    pub offsets: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Residuals,
    Coverage,
    Pca,
    Cluster,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub what: Analysis,
    /// ISO3 code for `coverage`.
    #[arg(long)]
    pub country: Option<String>,
    /// Number of clusters for `cluster`.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Use raw parameter values instead of standardized ones for PCA and clustering.
    #[arg(long)]
    pub unstandardized: bool,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[command(flatten)]
    pub tables: Tables,
    #[command(flatten)]
    pub window: Window,
    #[arg(long)]
    pub offsets: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// `term,estimate` CSV with the intercept, model terms and `theta`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value = "negbin", value_parser = parse_family)]
    pub family: Family,
    #[command(flatten)]
    pub tables: Tables,
    /// Generate a synthetic world with this many countries instead of reading tables.
    #[arg(long)]
    pub synthetic_countries: Option<usize>,
    #[arg(long, default_value_t = 31)]
    pub synthetic_media: usize,
    #[command(flatten)]
    pub window: Window,
    /// Expected stories per media-week.
    #[arg(long, default_value_t = 200.0)]
    pub row_total: f64,
    #[arg(long)]
    pub include_home: bool,
    #[arg(long)]
    pub no_kickoff: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NEWSGRAVITY_LOG", "info"))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size worker pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Build(a) => commands::build(a),
        Command::Fit(a) => commands::fit(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
