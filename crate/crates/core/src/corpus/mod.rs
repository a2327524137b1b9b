//! Data model and ingestion: announcements (JSONL), daily price and index series
//! (CSV), annual-report fundamentals (CSV), and trading-calendar alignment.
//!
//! A dataset directory has the layout
//!
//! ```text
//! announcements.jsonl
//! prices/<TICKER>.csv      date,close,volume
//! index.csv                date,close            (optional)
//! fundamentals.csv         ticker,year,ipo_date,portfolio_size,...  (optional)
//! ```

mod announcement;
mod fundamentals;
mod series;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

pub use announcement::{
    load_announcements, parse_announcements, write_announcements, Announcement, Icd10, Phase,
    Polarity,
};
pub use fundamentals::{
    load_fundamentals, parse_fundamentals, write_fundamentals, Fundamentals, FundamentalsTable,
    RawReport, BALANCE_PREFIX, CASHFLOW_PREFIX, CASH_FROM_OPERATIONS, INCOME_PREFIX, TOTAL_EQUITY,
    TOTAL_REVENUE,
};
pub use series::{
    align_index_to_calendar, align_to_calendar, event_day_index, load_index_series,
    load_price_series, parse_index_series, parse_price_series, write_index_series,
    write_price_series, IndexSeries, PriceSeries,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate announcement id '{0}'")]
    DuplicateId(String),
    #[error("non-positive price on {0}")]
    NonPositivePrice(NaiveDate),
    #[error("negative or non-finite volume on {0}")]
    NegativeVolume(NaiveDate),
    #[error("duplicate or out-of-order date {0}")]
    DuplicateDate(NaiveDate),
    #[error("series is empty")]
    EmptySeries,
    #[error("series columns have different lengths")]
    LengthMismatch,
    #[error("calendar starts {calendar_start} before first observation {first_observation}")]
    LeadingGap {
        calendar_start: NaiveDate,
        first_observation: NaiveDate,
    },
    #[error("zero or missing denominator '{denominator}' for {ticker}/{year}")]
    ZeroDenominator {
        ticker: String,
        year: i32,
        denominator: &'static str,
    },
    #[error("duplicate fundamentals row for {ticker}/{year}")]
    DuplicateFundamentals { ticker: String, year: i32 },
    #[error("{0}")]
    Invalid(String),
}

/// Everything a run consumes, as loaded from a dataset directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub announcements: Vec<Announcement>,
    pub prices: BTreeMap<String, PriceSeries>,
    pub index: Option<IndexSeries>,
    pub fundamentals: FundamentalsTable,
}

pub const ANNOUNCEMENTS_FILE: &str = "announcements.jsonl";
pub const PRICES_DIR: &str = "prices";
pub const INDEX_FILE: &str = "index.csv";
pub const FUNDAMENTALS_FILE: &str = "fundamentals.csv";
pub const INDEX_NAME: &str = "NBI";

impl Dataset {
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
        let dir = dir.as_ref();
        let announcements = load_announcements(dir.join(ANNOUNCEMENTS_FILE))?;
        let mut prices = BTreeMap::new();
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir.join(PRICES_DIR))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for path in files {
            let ticker = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let series = load_price_series(&path, &ticker)?;
            prices.insert(ticker, series);
        }
        let index_path = dir.join(INDEX_FILE);
        let index = if index_path.exists() {
            Some(load_index_series(index_path, INDEX_NAME)?)
        } else {
            None
        };
        let fpath = dir.join(FUNDAMENTALS_FILE);
        let fundamentals = if fpath.exists() {
            load_fundamentals(fpath)?
        } else {
            FundamentalsTable::new()
        };
        Ok(Dataset {
            announcements,
            prices,
            index,
            fundamentals,
        })
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join(PRICES_DIR))?;
        write_announcements(dir.join(ANNOUNCEMENTS_FILE), &self.announcements)?;
        for (ticker, s) in &self.prices {
            write_price_series(dir.join(PRICES_DIR).join(format!("{ticker}.csv")), s)?;
        }
        if let Some(index) = &self.index {
            write_index_series(dir.join(INDEX_FILE), index)?;
        }
        write_fundamentals(dir.join(FUNDAMENTALS_FILE), &self.fundamentals)?;
        Ok(())
    }

    /// Trading calendar: the index dates when present, else the union of all price dates.
    pub fn calendar(&self) -> Vec<NaiveDate> {
        if let Some(index) = &self.index {
            return index.dates().to_vec();
        }
        let mut all: Vec<NaiveDate> = self
            .prices
            .values()
            .flat_map(|s| s.dates().iter().copied())
            .collect();
        all.sort();
        all.dedup();
        all
    }
}
