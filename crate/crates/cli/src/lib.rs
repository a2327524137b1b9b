//! `trialpulse` command line: one subcommand per pipeline stage plus data
//! generation, fetching and report rendering.

pub mod fetch;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use trialpulse_core::evalkit::{synth_generate, SynthConfig};
use trialpulse_core::pipeline::{
    load_config_file, parse_override, render_reports, run_until, ConfigError, Manifest,
    PipelineError, RunConfig, Stage,
};

pub use fetch::{fetch_csv, validate_csv, CsvKind, FetchError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "trialpulse",
    version,
    about = "Event-study pipeline for clinical-trial announcements"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Random seed; required for every stage run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Config override, applied after the file and before the flags above.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the dataset and map announcements to trading days.
    Ingest,
    /// Assign polarity labels and propose new keywords.
    Label,
    /// Detect volume peaks and estimate the post-announcement window.
    Windows,
    /// Forecast counterfactual price paths and backtest the forecaster.
    Forecast,
    /// Compute NCAR and price classes for every event.
    Ncar,
    /// Run up to NCAR and print the statistical tests.
    Stats,
    /// Build the event graph and the feature table.
    Graph,
    /// Train the GCN + gradient-boosting ensemble.
    Train,
    /// Compare models over stratified repeats.
    Evaluate,
    /// Permutation importance of the trained ensemble.
    Explain,
    /// Every stage, then the charts.
    Run,
    /// Re-render charts and tables from an existing output directory.
    Report,
    /// Write a synthetic dataset with known planted effects.
    Simgen(SimgenArgs),
    /// Download a CSV input and check its schema.
    Fetch(FetchArgs),
}

#[derive(Debug, Args)]
pub struct SimgenArgs {
    /// Directory to write the dataset into.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub companies: Option<usize>,
    #[arg(long)]
    pub years: Option<usize>,
    #[arg(long)]
    pub events: Option<usize>,
    /// Planted mean NCAR shift of negative announcements.
    #[arg(long, allow_hyphen_values = true)]
    pub negative_shift: Option<f64>,
    /// Planted mean NCAR shift of positive announcements.
    #[arg(long, allow_hyphen_values = true)]
    pub positive_shift: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    pub url: String,
    pub dest: PathBuf,
    /// prices, index or fundamentals.
    #[arg(long, default_value = "prices")]
    pub kind: CsvKind,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_VALIDATION,
            CliError::Pipeline(PipelineError::Config(_)) => EXIT_VALIDATION,
            CliError::Fetch(FetchError::InvalidUrl(_) | FetchError::Schema(_)) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Merges config file, `--set` overrides and flags, in increasing precedence.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut pairs: BTreeMap<String, String> = match &g.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    for o in &g.overrides {
        let (k, v) = parse_override(o)?;
        pairs.insert(k, v);
    }
    if let Some(s) = g.seed {
        pairs.insert("seed".into(), s.to_string());
    }
    if let Some(d) = &g.data {
        pairs.insert("data_dir".into(), d.display().to_string());
    }
    if let Some(o) = &g.out {
        pairs.insert("out_dir".into(), o.display().to_string());
    }
    Ok(RunConfig::from_pairs(&pairs)?)
}

fn stage_of(cmd: &Command) -> Option<Stage> {
    Some(match cmd {
        Command::Ingest => Stage::Ingest,
        Command::Label => Stage::Label,
        Command::Windows => Stage::Windows,
        Command::Forecast => Stage::Forecast,
        Command::Ncar | Command::Stats => Stage::Ncar,
        Command::Graph => Stage::Graph,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Explain | Command::Run => Stage::Explain,
        Command::Report | Command::Simgen(_) | Command::Fetch(_) => return None,
    })
}

fn describe(m: &Manifest, out: &std::path::Path) -> String {
    let mut s = String::new();
    for rec in &m.stages {
        let items: Vec<String> = rec
            .summary
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(s, "{:<9} {}", rec.stage.as_str(), items.join(" "));
    }
    let _ = writeln!(s, "outputs in {}", out.display());
    s
}

/// Executes a parsed command, writing human-readable progress to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let runtime = |e: std::io::Error| CliError::Runtime(e.to_string());
    match &cli.command {
        Command::Simgen(a) => {
            let seed = cli
                .global
                .seed
                .ok_or_else(|| CliError::Usage("--seed is required".into()))?;
            let mut c = SynthConfig::new(seed);
            c.n_companies = a.companies.unwrap_or(c.n_companies);
            c.years = a.years.unwrap_or(c.years);
            c.n_events = a.events.unwrap_or(c.n_events);
            c.negative.mean = a.negative_shift.unwrap_or(c.negative.mean);
            c.positive.mean = a.positive_shift.unwrap_or(c.positive.mean);
            let ds = synth_generate(&c).map_err(|e| CliError::Usage(e.to_string()))?;
            ds.write_dir(&a.dir)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(
                stdout,
                "wrote {} announcements for {} companies to {} (planted window {})",
                ds.dataset.announcements.len(),
                ds.dataset.prices.len(),
                a.dir.display(),
                ds.truth.post_window
            )
            .map_err(runtime)
        }
        Command::Fetch(a) => {
            let n = fetch_csv(&a.url, &a.dest, a.kind)?;
            writeln!(
                stdout,
                "fetched {n} bytes of {} csv into {}",
                a.kind,
                a.dest.display()
            )
            .map_err(runtime)
        }
        Command::Report => {
            let out = match (&cli.global.out, &cli.global.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => resolve_config(&cli.global)?.out_dir,
                (None, None) => PathBuf::from("out"),
            };
            if !out.is_dir() {
                return Err(CliError::Usage(format!(
                    "output directory {} does not exist",
                    out.display()
                )));
            }
            let files = render_reports(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(stdout, "rendered {} in {}", files.join(", "), out.display()).map_err(runtime)
        }
        cmd => {
            let config = resolve_config(&cli.global)?;
            let last = stage_of(cmd).expect("stage command");
            let manifest = run_until(&config, last)?;
            stdout
                .write_all(describe(&manifest, &config.out_dir).as_bytes())
                .map_err(runtime)?;
            if matches!(cmd, Command::Stats) {
                let stats =
                    std::fs::read_to_string(config.out_dir.join("stats.json")).map_err(runtime)?;
                stdout.write_all(stats.as_bytes()).map_err(runtime)?;
            }
            if matches!(cmd, Command::Run) {
                let files = render_reports(&config.out_dir)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                writeln!(stdout, "rendered {}", files.join(", ")).map_err(runtime)?;
            }
            Ok(())
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
