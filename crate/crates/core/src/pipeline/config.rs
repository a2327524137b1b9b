use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::boost::GbdtConfig;
use crate::corpus::{ANNOUNCEMENTS_FILE, PRICES_DIR};
use crate::forecast::DEFAULT_ESTIMATION_WINDOW;
use crate::graph::{GcnConfig, DEFAULT_MAX_GAP_DAYS};
use crate::market::{MarketConfig, DEFAULT_POST_WINDOW, DEFAULT_WINDOW_QUANTILE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("'{0}' is required")]
    MissingKey(&'static str),
    #[error("{key}={value}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{what} not found: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("reading {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostWindow {
    Fixed(usize),
    /// Use the estimated volume-peak quantile.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecasterChoice {
    Market,
    Drift,
    Import,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DictionaryChoice {
    Initial,
    Updated,
    File(PathBuf),
}

/// Everything a run depends on. Outputs are a function of this and the input files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub post_window: PostWindow,
    pub window_quantile: f64,
    pub market: MarketConfig,
    pub forecaster: ForecasterChoice,
    pub forecast_file: Option<PathBuf>,
    pub estimation_window: usize,
    pub dictionaries: DictionaryChoice,
    pub bootstrap: bool,
    pub keyword_suggestions: usize,
    pub max_gap_days: i64,
    pub gcn: GcnConfig,
    pub gbdt: GbdtConfig,
    pub forest_trees: usize,
    pub repeats: usize,
    pub train_fraction: f64,
    pub importance_repeats: usize,
    pub groups: usize,
}

const KEYS: &[&str] = &[
    "data_dir",
    "out_dir",
    "seed",
    "post_window",
    "window_quantile",
    "peak_k",
    "baseline_window",
    "forecaster",
    "forecast_file",
    "estimation_window",
    "dictionaries",
    "bootstrap",
    "keyword_suggestions",
    "max_gap_days",
    "gcn.hidden",
    "gcn.epochs",
    "gcn.learning_rate",
    "gcn.validation_fraction",
    "gbdt.n_rounds",
    "gbdt.max_depth",
    "gbdt.learning_rate",
    "gbdt.subsample",
    "gbdt.lambda",
    "gbdt.min_child_weight",
    "rf.n_trees",
    "eval.repeats",
    "eval.train_fraction",
    "explain.repeats",
    "stats.groups",
];

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            message: format!("expected key=value, got '{line}'"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: format!("duplicate key '{k}'"),
            });
        }
    }
    Ok(out)
}

pub fn load_config_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_text(&text)
}

/// Splits a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Syntax {
        line: 0,
        message: format!("expected key=value, got '{s}'"),
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn invalid(key: &str, value: impl ToString, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

impl RunConfig {
    pub fn new(data_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        RunConfig {
            data_dir: data_dir.into(),
            out_dir: out_dir.into(),
            seed,
            post_window: PostWindow::Fixed(DEFAULT_POST_WINDOW),
            window_quantile: DEFAULT_WINDOW_QUANTILE,
            market: MarketConfig::default(),
            forecaster: ForecasterChoice::Market,
            forecast_file: None,
            estimation_window: DEFAULT_ESTIMATION_WINDOW,
            dictionaries: DictionaryChoice::Updated,
            bootstrap: true,
            keyword_suggestions: 10,
            max_gap_days: DEFAULT_MAX_GAP_DAYS,
            gcn: GcnConfig {
                seed,
                ..GcnConfig::default()
            },
            gbdt: GbdtConfig {
                seed,
                ..GbdtConfig::default()
            },
            forest_trees: 100,
            repeats: crate::evalkit::DEFAULT_REPEATS,
            train_fraction: crate::evalkit::DEFAULT_TRAIN_FRACTION,
            importance_repeats: 5,
            groups: 4,
        }
    }

    /// Builds a config from key/value pairs; `data_dir` and `seed` are required.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let data_dir = pairs
            .get("data_dir")
            .ok_or(ConfigError::MissingKey("data_dir"))?;
        let seed = parse::<u64>(
            "seed",
            pairs.get("seed").ok_or(ConfigError::MissingKey("seed"))?,
        )?;
        let out_dir = pairs.get("out_dir").map(String::as_str).unwrap_or("out");
        let mut c = RunConfig::new(data_dir, out_dir, seed);
        for (k, v) in pairs {
            let k = k.as_str();
            match k {
                "data_dir" | "out_dir" | "seed" => {}
                "post_window" => {
                    c.post_window = if v == "auto" {
                        PostWindow::Auto
                    } else {
                        PostWindow::Fixed(parse(k, v)?)
                    }
                }
                "window_quantile" => c.window_quantile = parse(k, v)?,
                "peak_k" => c.market.peak_k = parse(k, v)?,
                "baseline_window" => c.market.baseline_window = parse(k, v)?,
                "forecaster" => {
                    c.forecaster = match v.as_str() {
                        "market" => ForecasterChoice::Market,
                        "drift" => ForecasterChoice::Drift,
                        "import" => ForecasterChoice::Import,
                        _ => return Err(invalid(k, v, "expected market, drift or import")),
                    }
                }
                "forecast_file" => c.forecast_file = Some(PathBuf::from(v)),
                "estimation_window" => c.estimation_window = parse(k, v)?,
                "dictionaries" => {
                    c.dictionaries = match v.as_str() {
                        "initial" => DictionaryChoice::Initial,
                        "updated" => DictionaryChoice::Updated,
                        path => DictionaryChoice::File(PathBuf::from(path)),
                    }
                }
                "bootstrap" => c.bootstrap = parse(k, v)?,
                "keyword_suggestions" => c.keyword_suggestions = parse(k, v)?,
                "max_gap_days" => c.max_gap_days = parse(k, v)?,
                "gcn.hidden" => c.gcn.hidden = parse(k, v)?,
                "gcn.epochs" => c.gcn.epochs = parse(k, v)?,
                "gcn.learning_rate" => c.gcn.learning_rate = parse(k, v)?,
                "gcn.validation_fraction" => c.gcn.validation_fraction = parse(k, v)?,
                "gbdt.n_rounds" => c.gbdt.n_rounds = parse(k, v)?,
                "gbdt.max_depth" => c.gbdt.max_depth = parse(k, v)?,
                "gbdt.learning_rate" => c.gbdt.learning_rate = parse(k, v)?,
                "gbdt.subsample" => c.gbdt.subsample = parse(k, v)?,
                "gbdt.lambda" => c.gbdt.lambda = parse(k, v)?,
                "gbdt.min_child_weight" => c.gbdt.min_child_weight = parse(k, v)?,
                "rf.n_trees" => c.forest_trees = parse(k, v)?,
                "eval.repeats" => c.repeats = parse(k, v)?,
                "eval.train_fraction" => c.train_fraction = parse(k, v)?,
                "explain.repeats" => c.importance_repeats = parse(k, v)?,
                "stats.groups" => c.groups = parse(k, v)?,
                _ => unreachable!("keys checked above"),
            }
        }
        Ok(c)
    }

    /// Canonical key/value form of every setting except the output directory, which
    /// does not influence any output.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("data_dir", self.data_dir.display().to_string());
        put("seed", self.seed.to_string());
        put(
            "post_window",
            match self.post_window {
                PostWindow::Fixed(t) => t.to_string(),
                PostWindow::Auto => "auto".into(),
            },
        );
        put("window_quantile", self.window_quantile.to_string());
        put("peak_k", self.market.peak_k.to_string());
        put("baseline_window", self.market.baseline_window.to_string());
        put(
            "forecaster",
            match self.forecaster {
                ForecasterChoice::Market => "market",
                ForecasterChoice::Drift => "drift",
                ForecasterChoice::Import => "import",
            }
            .into(),
        );
        if let Some(f) = &self.forecast_file {
            put("forecast_file", f.display().to_string());
        }
        put("estimation_window", self.estimation_window.to_string());
        put(
            "dictionaries",
            match &self.dictionaries {
                DictionaryChoice::Initial => "initial".into(),
                DictionaryChoice::Updated => "updated".into(),
                DictionaryChoice::File(p) => p.display().to_string(),
            },
        );
        put("bootstrap", self.bootstrap.to_string());
        put("keyword_suggestions", self.keyword_suggestions.to_string());
        put("max_gap_days", self.max_gap_days.to_string());
        put("gcn.hidden", self.gcn.hidden.to_string());
        put("gcn.epochs", self.gcn.epochs.to_string());
        put("gcn.learning_rate", self.gcn.learning_rate.to_string());
        put(
            "gcn.validation_fraction",
            self.gcn.validation_fraction.to_string(),
        );
        put("gbdt.n_rounds", self.gbdt.n_rounds.to_string());
        put("gbdt.max_depth", self.gbdt.max_depth.to_string());
        put("gbdt.learning_rate", self.gbdt.learning_rate.to_string());
        put("gbdt.subsample", self.gbdt.subsample.to_string());
        put("gbdt.lambda", self.gbdt.lambda.to_string());
        put(
            "gbdt.min_child_weight",
            self.gbdt.min_child_weight.to_string(),
        );
        put("rf.n_trees", self.forest_trees.to_string());
        put("eval.repeats", self.repeats.to_string());
        put("eval.train_fraction", self.train_fraction.to_string());
        put("explain.repeats", self.importance_repeats.to_string());
        put("stats.groups", self.groups.to_string());
        m
    }

    /// Checks value ranges and that every input path exists, before any stage runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let exists = |what: &'static str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath {
                    what,
                    path: p.to_path_buf(),
                })
            }
        };
        exists("data directory", &self.data_dir)?;
        exists(
            "announcements file",
            &self.data_dir.join(ANNOUNCEMENTS_FILE),
        )?;
        exists("prices directory", &self.data_dir.join(PRICES_DIR))?;
        match (&self.forecaster, &self.forecast_file) {
            (ForecasterChoice::Import, None) => {
                return Err(ConfigError::MissingKey("forecast_file"))
            }
            (ForecasterChoice::Import, Some(f)) => exists("forecast file", f)?,
            _ => {}
        }
        if let DictionaryChoice::File(p) = &self.dictionaries {
            exists("dictionary file", p)?;
        }
        if let PostWindow::Fixed(0) = self.post_window {
            return Err(invalid("post_window", 0, "must be positive"));
        }
        if !(self.window_quantile > 0.0 && self.window_quantile <= 1.0) {
            return Err(invalid(
                "window_quantile",
                self.window_quantile,
                "must be in (0, 1]",
            ));
        }
        if !(self.market.peak_k > 0.0) || self.market.baseline_window == 0 {
            return Err(invalid(
                "peak_k",
                self.market.peak_k,
                "peak_k and baseline_window must be positive",
            ));
        }
        if self.estimation_window < 30 {
            return Err(invalid(
                "estimation_window",
                self.estimation_window,
                "must be at least 30",
            ));
        }
        if self.max_gap_days <= 0 {
            return Err(invalid(
                "max_gap_days",
                self.max_gap_days,
                "must be positive",
            ));
        }
        if self.gcn.hidden == 0 || !(self.gcn.learning_rate > 0.0) {
            return Err(invalid(
                "gcn.hidden",
                self.gcn.hidden,
                "hidden and learning_rate must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.gcn.validation_fraction) {
            return Err(invalid(
                "gcn.validation_fraction",
                self.gcn.validation_fraction,
                "must be in [0, 1)",
            ));
        }
        if self.gbdt.max_depth == 0 || !(self.gbdt.learning_rate > 0.0) {
            return Err(invalid(
                "gbdt.max_depth",
                self.gbdt.max_depth,
                "max_depth and learning_rate must be positive",
            ));
        }
        if !(self.gbdt.subsample > 0.0 && self.gbdt.subsample <= 1.0) {
            return Err(invalid(
                "gbdt.subsample",
                self.gbdt.subsample,
                "must be in (0, 1]",
            ));
        }
        if !(self.gbdt.lambda >= 0.0) || !(self.gbdt.min_child_weight >= 0.0) {
            return Err(invalid(
                "gbdt.lambda",
                self.gbdt.lambda,
                "lambda and min_child_weight must be non-negative",
            ));
        }
        if self.forest_trees == 0
            || self.repeats == 0
            || self.importance_repeats == 0
            || self.groups == 0
        {
            return Err(invalid(
                "rf.n_trees",
                self.forest_trees,
                "tree, repeat and group counts must be positive",
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid(
                "eval.train_fraction",
                self.train_fraction,
                "must be in (0, 1)",
            ));
        }
        Ok(())
    }
}
