//! Market features: trading-volume peaks, the post-announcement window derived
//! from peak durations, pre-event price trends and volatility.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PriceSeries;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("series of length {len} is too short for a {window}-day baseline")]
    SeriesTooShort { len: usize, window: usize },
    #[error("no volume peaks to estimate a window from")]
    NoPeaks,
    #[error("quantile {0} outside (0, 1]")]
    InvalidQuantile(f64),
    #[error("window [{start}, {end}] relative to day {event_day} is outside the history")]
    OutOfHistory {
        start: isize,
        end: isize,
        event_day: usize,
    },
    #[error("need {needed} days of history before day {event_day}")]
    InsufficientHistory { needed: usize, event_day: usize },
}

/// A maximal run of consecutive trading days with abnormally high volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumePeak {
    pub start_index: usize,
    pub end_index: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    /// Inclusive trading-day count.
    pub duration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    /// A day is hot when its volume exceeds this multiple of the trailing median.
    pub peak_k: f64,
    pub baseline_window: usize,
    pub volatility_window: usize,
    pub trading_days_per_year: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            peak_k: 3.0,
            baseline_window: 90,
            volatility_window: 200,
            trading_days_per_year: 252.0,
        }
    }
}

/// Default post-announcement window in trading days.
pub const DEFAULT_POST_WINDOW: usize = 20;
/// Share of peaks whose duration the post window must cover.
pub const DEFAULT_WINDOW_QUANTILE: f64 = 0.9;

fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    median_sorted(&s)
}

/// Flags days whose volume exceeds `k` times the median of the preceding
/// `baseline_window` days. The first `baseline_window` days are never flagged.
fn hot_days(volume: &[f64], k: f64, baseline_window: usize) -> Vec<bool> {
    let mut hot = vec![false; volume.len()];
    if baseline_window == 0 || volume.len() <= baseline_window {
        return hot;
    }
    let mut window: Vec<f64> = volume[..baseline_window].to_vec();
    window.sort_by(f64::total_cmp);
    for i in baseline_window..volume.len() {
        hot[i] = volume[i] > k * median_sorted(&window);
        let old = volume[i - baseline_window];
        let pos = window.partition_point(|x| x.total_cmp(&old).is_lt());
        window.remove(pos);
        let pos = window.partition_point(|x| x.total_cmp(&volume[i]).is_lt());
        window.insert(pos, volume[i]);
    }
    hot
}

pub fn detect_volume_peaks(
    series: &PriceSeries,
    k_threshold: f64,
    baseline_window: usize,
) -> Result<Vec<VolumePeak>, MarketError> {
    peaks_in(
        series.dates(),
        series.volume(),
        k_threshold,
        baseline_window,
    )
}

fn peaks_in(
    dates: &[NaiveDate],
    volume: &[f64],
    k_threshold: f64,
    baseline_window: usize,
) -> Result<Vec<VolumePeak>, MarketError> {
    if volume.len() <= baseline_window {
        return Err(MarketError::SeriesTooShort {
            len: volume.len(),
            window: baseline_window,
        });
    }
    let hot = hot_days(volume, k_threshold, baseline_window);
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < hot.len() {
        if !hot[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < hot.len() && hot[i + 1] {
            i += 1;
        }
        peaks.push(VolumePeak {
            start_index: start,
            end_index: i,
            start_date: dates[start],
            end_date: dates[i],
            duration: i - start + 1,
        });
        i += 1;
    }
    Ok(peaks)
}

/// Nearest-rank quantile: the smallest value with at least `q` of the sample at or below it.
pub fn nearest_rank(values: &[usize], q: f64) -> Result<usize, MarketError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(MarketError::InvalidQuantile(q));
    }
    if values.is_empty() {
        return Err(MarketError::NoPeaks);
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[rank - 1])
}

/// Post-announcement window length: the `quantile` of peak durations.
pub fn estimate_post_window(all_peaks: &[VolumePeak], quantile: f64) -> Result<usize, MarketError> {
    let d: Vec<usize> = all_peaks.iter().map(|p| p.duration).collect();
    nearest_rank(&d, quantile)
}

pub fn duration_histogram(peaks: &[VolumePeak]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for p in peaks {
        *h.entry(p.duration).or_insert(0) += 1;
    }
    h
}

/// Fractional price change between two days given as offsets from `event_day`.
pub fn price_trend(
    close: &[f64],
    window_start_offset: isize,
    window_end_offset: isize,
    event_day: usize,
) -> Result<f64, MarketError> {
    let err = MarketError::OutOfHistory {
        start: window_start_offset,
        end: window_end_offset,
        event_day,
    };
    let at = |off: isize| -> Option<usize> {
        let i = event_day as isize + off;
        (i >= 0 && (i as usize) < close.len()).then_some(i as usize)
    };
    match (at(window_start_offset), at(window_end_offset)) {
        (Some(a), Some(b)) if a <= b => Ok(close[b] / close[a] - 1.0),
        _ => Err(err),
    }
}

/// Sample standard deviation over median of the `window` closes before `event_day`.
pub fn volatility(close: &[f64], event_day: usize, window: usize) -> Result<f64, MarketError> {
    if window < 2 || event_day < window || event_day > close.len() {
        return Err(MarketError::InsufficientHistory {
            needed: window,
            event_day,
        });
    }
    let w = &close[event_day - window..event_day];
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / median(w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketFeatures {
    pub peaks_per_year: f64,
    /// 0 when no peak precedes the event.
    pub last_peak_duration: usize,
    pub trend_30: f64,
    pub trend_prev_30: f64,
    /// `None` when no index series is supplied.
    pub index_trend_30: Option<f64>,
    pub volatility_200: f64,
}

/// Assembles the pre-event market features of an event on `event_day`. Only data
/// strictly before the event day is used. `index_close` must be aligned with `series`.
pub fn market_features(
    series: &PriceSeries,
    index_close: Option<&[f64]>,
    event_day: usize,
    config: &MarketConfig,
) -> Result<MarketFeatures, MarketError> {
    let close = series.close();
    let history = event_day.min(series.len());
    let peaks = peaks_in(
        &series.dates()[..history],
        &series.volume()[..history],
        config.peak_k,
        config.baseline_window,
    )?;
    let years = history as f64 / config.trading_days_per_year;
    Ok(MarketFeatures {
        peaks_per_year: peaks.len() as f64 / years,
        last_peak_duration: peaks.last().map_or(0, |p| p.duration),
        trend_30: price_trend(close, -30, -1, event_day)?,
        trend_prev_30: price_trend(close, -60, -31, event_day)?,
        index_trend_30: index_close
            .map(|ix| price_trend(ix, -30, -1, event_day))
            .transpose()?,
        volatility_200: volatility(close, event_day, config.volatility_window)?,
    })
}
