//! Expected-return paths for the post-event window.
//!
//! Day indexing: for an event on trading day `e`, paths are anchored at the close of
//! day `e - 1` (value 1.0) and step `t = 1..=T` covers day `e - 1 + t`. Estimation
//! windows only use closes up to day `e - 1`.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{IndexSeries, PriceSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("need {needed} trading days before day {event_day}, have {available}")]
    InsufficientHistory {
        needed: usize,
        available: usize,
        event_day: usize,
    },
    #[error("post-event window of {horizon} days runs past the end of the history")]
    OutOfHistory { horizon: usize },
    #[error("degenerate index: {0}")]
    DegenerateIndex(String),
    #[error("expected path factor {factor} at step {step} is not positive")]
    NonPositivePath { step: usize, factor: f64 },
    #[error("no forecast for event '{0}'")]
    MissingEvent(String),
    #[error("invalid path: {0}")]
    InvariantViolation(String),
    #[error("estimation window {0} is below the 30-day minimum")]
    WindowTooShort(usize),
    #[error("stock and index series are not aligned")]
    NotAligned,
    #[error("forecast file: {0}")]
    Io(String),
}

/// Price path relative to its first value: `values[0] == 1.0`, all values positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NormalizedPath(Vec<f64>);

impl NormalizedPath {
    pub fn new(values: Vec<f64>) -> Result<Self, ForecastError> {
        if values.len() < 2 {
            return Err(ForecastError::InvariantViolation(format!(
                "path needs at least 2 values, got {}",
                values.len()
            )));
        }
        if values[0] != 1.0 {
            return Err(ForecastError::InvariantViolation(format!(
                "first value is {}, expected 1.0",
                values[0]
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(ForecastError::InvariantViolation(format!(
                "value {v} at step {i} is not a positive number"
            )));
        }
        Ok(NormalizedPath(values))
    }

    /// Divides a window of prices by its first entry.
    pub fn from_prices(prices: &[f64]) -> Result<Self, ForecastError> {
        let first = *prices
            .first()
            .ok_or_else(|| ForecastError::InvariantViolation("empty window".into()))?;
        let mut v: Vec<f64> = prices.iter().map(|p| p / first).collect();
        v[0] = 1.0;
        NormalizedPath::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Number of post-anchor steps `T`.
    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }
}

impl TryFrom<Vec<f64>> for NormalizedPath {
    type Error = ForecastError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        NormalizedPath::new(v)
    }
}

impl From<NormalizedPath> for Vec<f64> {
    fn from(p: NormalizedPath) -> Self {
        p.0
    }
}

/// Realized path for the window starting on `event_day`.
pub fn actual_path(
    close: &[f64],
    event_day: usize,
    horizon: usize,
) -> Result<NormalizedPath, ForecastError> {
    if event_day == 0 {
        return Err(ForecastError::InsufficientHistory {
            needed: 1,
            available: 0,
            event_day,
        });
    }
    let end = event_day - 1 + horizon;
    if horizon == 0 || end >= close.len() {
        return Err(ForecastError::OutOfHistory { horizon });
    }
    NormalizedPath::from_prices(&close[event_day - 1..=end])
}

fn simple_returns(close: &[f64]) -> Vec<f64> {
    close.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Daily returns of the `window` days ending on `event_day - 1`.
fn window_returns(
    close: &[f64],
    event_day: usize,
    window: usize,
) -> Result<Vec<f64>, ForecastError> {
    if event_day < window + 1 || event_day > close.len() {
        return Err(ForecastError::InsufficientHistory {
            needed: window + 1,
            available: event_day.min(close.len()),
            event_day,
        });
    }
    Ok(simple_returns(&close[event_day - window - 1..event_day]))
}

/// Index loading of daily stock returns estimated by ordinary least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub alpha: f64,
    pub beta: f64,
    pub estimation_window: usize,
    pub r2: f64,
}

pub const DEFAULT_ESTIMATION_WINDOW: usize = 90;

/// OLS of stock returns on index returns over the `window` days before `event_day`.
/// Slices must be aligned on the same calendar.
pub fn fit_market_model_on(
    stock: &[f64],
    index: &[f64],
    event_day: usize,
    window: usize,
) -> Result<MarketModel, ForecastError> {
    if window < 30 {
        return Err(ForecastError::WindowTooShort(window));
    }
    let y = window_returns(stock, event_day, window)?;
    let x = window_returns(index, event_day, window)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx <= f64::EPSILON * f64::EPSILON * n {
        return Err(ForecastError::DegenerateIndex(
            "index returns have zero variance over the estimation window".into(),
        ));
    }
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(MarketModel {
        alpha,
        beta,
        estimation_window: window,
        r2,
    })
}

pub fn fit_market_model(
    stock: &PriceSeries,
    index: &IndexSeries,
    event_day: usize,
    window: usize,
) -> Result<MarketModel, ForecastError> {
    if stock.dates() != index.dates() {
        return Err(ForecastError::NotAligned);
    }
    fit_market_model_on(stock.close(), index.close(), event_day, window)
}

/// Compounds `1 + alpha + beta * r` over the realized post-event index returns.
pub fn expected_path(
    model: &MarketModel,
    index_post: &[f64],
    horizon: usize,
) -> Result<NormalizedPath, ForecastError> {
    if horizon == 0 || index_post.len() != horizon {
        return Err(ForecastError::InvariantViolation(format!(
            "expected {horizon} index returns, got {}",
            index_post.len()
        )));
    }
    let mut values = Vec::with_capacity(horizon + 1);
    values.push(1.0);
    let mut level = 1.0;
    for (i, r) in index_post.iter().enumerate() {
        let factor = 1.0 + model.alpha + model.beta * r;
        if !(factor > 0.0) {
            return Err(ForecastError::NonPositivePath {
                step: i + 1,
                factor,
            });
        }
        level *= factor;
        values.push(level);
    }
    NormalizedPath::new(values)
}

/// Compounds the mean daily return of the estimation window.
pub fn drift_forecaster(
    stock: &[f64],
    event_day: usize,
    window: usize,
    horizon: usize,
) -> Result<NormalizedPath, ForecastError> {
    let r = window_returns(stock, event_day, window)?;
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let factor = 1.0 + mean;
    if !(factor > 0.0) {
        return Err(ForecastError::NonPositivePath { step: 1, factor });
    }
    if horizon == 0 {
        return Err(ForecastError::OutOfHistory { horizon });
    }
    let mut values = vec![1.0];
    let mut level = 1.0;
    for _ in 0..horizon {
        level *= factor;
        values.push(level);
    }
    NormalizedPath::new(values)
}

/// Aligned stock (and optional index) closes around one event.
#[derive(Debug, Clone, Copy)]
pub struct EventWindow<'a> {
    pub id: &'a str,
    pub stock: &'a [f64],
    pub index: Option<&'a [f64]>,
    pub event_day: usize,
}

impl<'a> EventWindow<'a> {
    /// The same series with the event moved `days` earlier.
    pub fn shifted_back(&self, days: usize) -> Option<EventWindow<'a>> {
        self.event_day
            .checked_sub(days)
            .map(|event_day| EventWindow { event_day, ..*self })
    }
}

/// Produces the expected normalized path for the `horizon` days starting on the event day.
pub trait Forecaster: Sync {
    fn name(&self) -> &'static str;
    fn forecast(
        &self,
        event: &EventWindow<'_>,
        horizon: usize,
    ) -> Result<NormalizedPath, ForecastError>;
}

#[derive(Debug, Clone, Copy)]
pub struct MarketModelForecaster {
    pub window: usize,
}

impl Default for MarketModelForecaster {
    fn default() -> Self {
        MarketModelForecaster {
            window: DEFAULT_ESTIMATION_WINDOW,
        }
    }
}

impl Forecaster for MarketModelForecaster {
    fn name(&self) -> &'static str {
        "market"
    }

    fn forecast(
        &self,
        event: &EventWindow<'_>,
        horizon: usize,
    ) -> Result<NormalizedPath, ForecastError> {
        let index = event.index.ok_or_else(|| {
            ForecastError::DegenerateIndex("no index series supplied for the market model".into())
        })?;
        if index.len() != event.stock.len() {
            return Err(ForecastError::NotAligned);
        }
        let model = fit_market_model_on(event.stock, index, event.event_day, self.window)?;
        let end = event.event_day - 1 + horizon;
        if horizon == 0 || end >= index.len() {
            return Err(ForecastError::OutOfHistory { horizon });
        }
        let post = simple_returns(&index[event.event_day - 1..=end]);
        expected_path(&model, &post, horizon)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DriftForecaster {
    pub window: usize,
}

impl Default for DriftForecaster {
    fn default() -> Self {
        DriftForecaster {
            window: DEFAULT_ESTIMATION_WINDOW,
        }
    }
}

impl Forecaster for DriftForecaster {
    fn name(&self) -> &'static str {
        "drift"
    }

    fn forecast(
        &self,
        event: &EventWindow<'_>,
        horizon: usize,
    ) -> Result<NormalizedPath, ForecastError> {
        drift_forecaster(event.stock, event.event_day, self.window, horizon)
    }
}

/// Externally produced paths keyed by event id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportedForecasts {
    paths: BTreeMap<String, NormalizedPath>,
}

impl ImportedForecasts {
    pub fn new(paths: BTreeMap<String, NormalizedPath>) -> Self {
        ImportedForecasts { paths }
    }

    /// Reads `event_id,v0,...,vT` rows; a leading `event_id,...` header row is skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ForecastError> {
        let file = File::open(path.as_ref()).map_err(|e| ForecastError::Io(e.to_string()))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut paths = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| ForecastError::Io(e.to_string()))?;
            let Some(id) = rec.get(0) else { continue };
            if i == 0 && id == "event_id" {
                continue;
            }
            let values = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| ForecastError::Io(format!("line {}: bad value '{v}'", i + 1)))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            paths.insert(id.to_string(), NormalizedPath::new(values)?);
        }
        Ok(ImportedForecasts { paths })
    }

    pub fn get(&self, event_id: &str) -> Result<&NormalizedPath, ForecastError> {
        self.paths
            .get(event_id)
            .ok_or_else(|| ForecastError::MissingEvent(event_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

impl Forecaster for ImportedForecasts {
    fn name(&self) -> &'static str {
        "import"
    }

    fn forecast(
        &self,
        event: &EventWindow<'_>,
        horizon: usize,
    ) -> Result<NormalizedPath, ForecastError> {
        let p = self.get(event.id)?;
        if p.horizon() != horizon {
            return Err(ForecastError::InvariantViolation(format!(
                "imported path for '{}' has {} steps, expected {horizon}",
                event.id,
                p.horizon()
            )));
        }
        Ok(p.clone())
    }
}

pub fn import_forecast(
    path: impl AsRef<Path>,
    event_id: &str,
) -> Result<NormalizedPath, ForecastError> {
    ImportedForecasts::load(path)?.get(event_id).cloned()
}

pub fn write_forecasts<'a>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = (&'a str, &'a NormalizedPath)>,
) -> Result<(), ForecastError> {
    let io = |e: csv::Error| ForecastError::Io(e.to_string());
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(io)?;
    for (id, p) in rows {
        let mut rec = vec![id.to_string()];
        rec.extend(p.values().iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| ForecastError::Io(e.to_string()))
}

/// Mean absolute percentage error over steps `1..=T`.
pub fn mape(predicted: &NormalizedPath, actual: &NormalizedPath) -> f64 {
    let p = &predicted.values()[1..];
    let a = &actual.values()[1..];
    p.iter().zip(a).map(|(p, a)| (p - a).abs() / a).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub per_event: Vec<(String, f64)>,
    pub skipped: Vec<(String, String)>,
    pub mean_mape: Option<f64>,
}

/// Forecasts each event's last `T` pre-event days from the data before them and
/// scores the forecast against the realized path.
pub fn sliding_backtest(
    forecaster: &dyn Forecaster,
    events: &[EventWindow<'_>],
    horizon: usize,
) -> BacktestReport {
    let results: Vec<Result<f64, ForecastError>> = events
        .par_iter()
        .map(|ev| {
            let pseudo = ev
                .shifted_back(horizon)
                .ok_or(ForecastError::InsufficientHistory {
                    needed: horizon,
                    available: ev.event_day,
                    event_day: ev.event_day,
                })?;
            let predicted = forecaster.forecast(&pseudo, horizon)?;
            let actual = actual_path(ev.stock, pseudo.event_day, horizon)?;
            Ok(mape(&predicted, &actual))
        })
        .collect();
    let mut per_event = Vec::new();
    let mut skipped = Vec::new();
    for (ev, r) in events.iter().zip(results) {
        match r {
            Ok(m) => per_event.push((ev.id.to_string(), m)),
            Err(e) => skipped.push((ev.id.to_string(), e.to_string())),
        }
    }
    let mean_mape = (!per_event.is_empty())
        .then(|| per_event.iter().map(|(_, m)| m).sum::<f64>() / per_event.len() as f64);
    BacktestReport {
        per_event,
        skipped,
        mean_mape,
    }
}
