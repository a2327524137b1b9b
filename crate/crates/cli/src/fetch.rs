//! Download of CSV inputs over HTTP with schema checks before anything lands on disk.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;
use trialpulse_core::corpus::{parse_fundamentals, parse_index_series, parse_price_series};

/// Largest body accepted, in bytes.
const MAX_BODY: u64 = 512 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Prices,
    Index,
    Fundamentals,
}

impl CsvKind {
    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            CsvKind::Prices => &["date", "close", "volume"],
            CsvKind::Index => &["date", "close"],
            CsvKind::Fundamentals => &["ticker", "year", "ipo_date", "portfolio_size"],
        }
    }
}

impl fmt::Display for CsvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsvKind::Prices => "prices",
            CsvKind::Index => "index",
            CsvKind::Fundamentals => "fundamentals",
        })
    }
}

impl FromStr for CsvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prices" => Ok(CsvKind::Prices),
            "index" => Ok(CsvKind::Index),
            "fundamentals" => Ok(CsvKind::Fundamentals),
            _ => Err(format!(
                "unknown csv kind '{s}' (expected prices, index or fundamentals)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("unsupported url '{0}': only http and https are fetched")]
    InvalidUrl(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error writing {path}: {message}")]
    Io { path: String, message: String },
}

/// Checks that `body` is a CSV of the given kind: header first, then a full parse.
pub fn validate_csv(kind: CsvKind, body: &[u8]) -> Result<(), FetchError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body);
    let header = rdr
        .headers()
        .map_err(|e| FetchError::Schema(format!("unreadable header: {e}")))?;
    let missing: Vec<&str> = kind
        .required_columns()
        .iter()
        .copied()
        .filter(|c| !header.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        let first: String = String::from_utf8_lossy(&body[..body.len().min(60)])
            .lines()
            .next()
            .unwrap_or("")
            .into();
        return Err(FetchError::Schema(format!(
            "not a {kind} csv: missing column(s) {} (first line: '{first}')",
            missing.join(", ")
        )));
    }
    let parsed = match kind {
        CsvKind::Prices => parse_price_series(body, "fetched").map(|_| ()),
        CsvKind::Index => parse_index_series(body, "fetched").map(|_| ()),
        CsvKind::Fundamentals => parse_fundamentals(body).map(|_| ()),
    };
    parsed.map_err(|e| FetchError::Schema(format!("{kind} csv rejected: {e}")))
}

/// Downloads `url` and writes it to `dest` only if it validates as `kind`.
/// Returns the number of bytes written.
pub fn fetch_csv(url: &str, dest: impl AsRef<Path>, kind: CsvKind) -> Result<u64, FetchError> {
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(FetchError::InvalidUrl(url.to_string()));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent
        .get(url)
        .call()
        .map_err(|e| FetchError::Network(e.to_string()))?;
    let status = resp.status();
    let body = resp
        .body_mut()
        .with_config()
        .limit(MAX_BODY)
        .read_to_vec()
        .map_err(|e| FetchError::Network(e.to_string()))?;
    if !status.is_success() {
        return Err(FetchError::Network(format!("server answered {status}")));
    }
    validate_csv(kind, &body)?;

    let dest = dest.as_ref();
    let io = |e: std::io::Error| FetchError::Io {
        path: dest.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = dest.with_extension("part");
    std::fs::write(&tmp, &body).map_err(io)?;
    std::fs::rename(&tmp, dest).map_err(io)?;
    Ok(body.len() as u64)
}
