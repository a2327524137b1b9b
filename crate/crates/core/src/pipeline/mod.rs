//! End-to-end run over a dataset directory: ingest, label, windows, forecast, ncar,
//! graph, train, evaluate, explain. Every output file is checksummed into
//! `manifest.json`; a run is a pure function of its config, seed and inputs.

mod config;
mod features;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::boost::BoostError;
use crate::corpus::{CorpusError, ANNOUNCEMENTS_FILE, FUNDAMENTALS_FILE, INDEX_FILE, PRICES_DIR};
use crate::evalkit::EvalError;
use crate::forecast::ForecastError;
use crate::graph::GraphError;
use crate::impact::ImpactError;
use crate::market::MarketError;
use crate::sentiment::SentimentError;

pub use config::{
    load_config_file, parse_config_text, parse_override, ConfigError, DictionaryChoice,
    ForecasterChoice, PostWindow, RunConfig,
};
pub use features::{event_features, EventInputs};
pub use stages::render_reports;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SKIPPED_FILE: &str = "skipped.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Label,
    Windows,
    Forecast,
    Ncar,
    Graph,
    Train,
    Evaluate,
    Explain,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Label,
        Stage::Windows,
        Stage::Forecast,
        Stage::Ncar,
        Stage::Graph,
        Stage::Train,
        Stage::Evaluate,
        Stage::Explain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::Windows => "windows",
            Stage::Forecast => "forecast",
            Stage::Ncar => "ncar",
            Stage::Graph => "graph",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Impact(#[from] ImpactError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{stage} stage failed: {source}")]
    Stage { stage: Stage, source: StageError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub outputs: Vec<FileDigest>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub stages: Vec<StageRecord>,
    pub skipped: FileDigest,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into the output directory and remembers their digests.
pub(crate) struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<FileDigest>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Outputs {
            dir,
            files: Vec::new(),
        }
    }

    pub(crate) fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub(crate) fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), StageError> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileDigest {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Records a file some other writer already produced.
    pub(crate) fn record(&mut self, name: &str) -> Result<(), StageError> {
        let bytes = std::fs::read(self.dir.join(name))?;
        self.files.push(FileDigest {
            file: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }
}

fn input_digests(config: &RunConfig) -> Result<Vec<FileDigest>, StageError> {
    let data = &config.data_dir;
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for name in [ANNOUNCEMENTS_FILE, INDEX_FILE, FUNDAMENTALS_FILE] {
        let p = data.join(name);
        if p.exists() {
            files.push((name.to_string(), p));
        }
    }
    let mut prices: Vec<PathBuf> = std::fs::read_dir(data.join(PRICES_DIR))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    prices.sort();
    for p in prices {
        let name = format!(
            "{PRICES_DIR}/{}",
            p.file_name().and_then(|s| s.to_str()).unwrap_or_default()
        );
        files.push((name, p));
    }
    if let Some(f) = &config.forecast_file {
        files.push(("forecast_file".into(), f.clone()));
    }
    if let DictionaryChoice::File(p) = &config.dictionaries {
        files.push(("dictionaries".into(), p.clone()));
    }
    files
        .into_iter()
        .map(|(file, path)| {
            Ok(FileDigest {
                file,
                sha256: sha256_hex(&std::fs::read(path)?),
            })
        })
        .collect()
}

/// Runs every stage.
pub fn run_pipeline(config: &RunConfig) -> Result<Manifest, PipelineError> {
    run_until(config, Stage::Explain)
}

/// Runs the stages up to and including `last` and writes the manifest for them.
pub fn run_until(config: &RunConfig, last: Stage) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let at = |stage: Stage| move |source: StageError| PipelineError::Stage { stage, source };
    std::fs::create_dir_all(&config.out_dir).map_err(|e| at(Stage::Ingest)(e.into()))?;
    let inputs = input_digests(config).map_err(at(Stage::Ingest))?;
    let mut state = stages::State::default();
    let mut records = Vec::new();
    for stage in Stage::ALL.into_iter().take_while(|s| *s <= last) {
        let mut out = Outputs::new(&config.out_dir);
        let summary = stages::run_stage(stage, config, &mut state, &mut out).map_err(at(stage))?;
        records.push(StageRecord {
            stage,
            outputs: out.files,
            summary,
        });
    }
    let mut out = Outputs::new(&config.out_dir);
    out.write(SKIPPED_FILE, &state.skipped_csv().map_err(at(last))?)
        .map_err(at(last))?;
    let manifest = Manifest {
        format_version: 1,
        seed: config.seed,
        config: config.to_pairs(),
        inputs,
        stages: records,
        skipped: out.files.remove(0),
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| at(last)(e.into()))?;
    json.push('\n');
    std::fs::write(config.out_dir.join(MANIFEST_FILE), json).map_err(|e| at(last)(e.into()))?;
    Ok(manifest)
}
