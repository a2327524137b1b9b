use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Daily close and volume history of one ticker on trading days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
    volume: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        ticker: impl Into<String>,
        dates: Vec<NaiveDate>,
        close: Vec<f64>,
        volume: Vec<f64>,
    ) -> Result<Self, CorpusError> {
        if dates.is_empty() {
            return Err(CorpusError::EmptySeries);
        }
        if dates.len() != close.len() || dates.len() != volume.len() {
            return Err(CorpusError::LengthMismatch);
        }
        check_increasing(&dates)?;
        check_prices(&dates, &close)?;
        if let Some(i) = volume.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(CorpusError::NegativeVolume(dates[i]));
        }
        Ok(PriceSeries {
            ticker: ticker.into(),
            dates,
            close,
            volume,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }
    pub fn close(&self) -> &[f64] {
        &self.close
    }
    pub fn volume(&self) -> &[f64] {
        &self.volume
    }
    pub fn len(&self) -> usize {
        self.dates.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Multiplies every close by `factor`; used by scale-invariance checks.
    pub fn scaled(&self, factor: f64) -> PriceSeries {
        PriceSeries {
            ticker: self.ticker.clone(),
            dates: self.dates.clone(),
            close: self.close.iter().map(|c| c * factor).collect(),
            volume: self.volume.clone(),
        }
    }
}

/// Daily close history of a market index (NBI in the original setting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries {
    name: String,
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
}

impl IndexSeries {
    pub fn new(
        name: impl Into<String>,
        dates: Vec<NaiveDate>,
        close: Vec<f64>,
    ) -> Result<Self, CorpusError> {
        if dates.is_empty() {
            return Err(CorpusError::EmptySeries);
        }
        if dates.len() != close.len() {
            return Err(CorpusError::LengthMismatch);
        }
        check_increasing(&dates)?;
        check_prices(&dates, &close)?;
        Ok(IndexSeries {
            name: name.into(),
            dates,
            close,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }
    pub fn close(&self) -> &[f64] {
        &self.close
    }
    pub fn len(&self) -> usize {
        self.dates.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

fn check_increasing(dates: &[NaiveDate]) -> Result<(), CorpusError> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(CorpusError::DuplicateDate(w[1]));
        }
    }
    Ok(())
}

fn check_prices(dates: &[NaiveDate], close: &[f64]) -> Result<(), CorpusError> {
    match close.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
        Some(i) => Err(CorpusError::NonPositivePrice(dates[i])),
        None => Ok(()),
    }
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: NaiveDate,
    close: f64,
    volume: f64,
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    date: NaiveDate,
    close: f64,
}

fn csv_err(e: csv::Error) -> CorpusError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    CorpusError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parses a `date,close,volume` CSV, sorting rows ascending by date.
pub fn parse_price_series<R: Read>(reader: R, ticker: &str) -> Result<PriceSeries, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<PriceRow> = Vec::new();
    for rec in rdr.deserialize() {
        let row: PriceRow = rec.map_err(csv_err)?;
        if !(row.close.is_finite() && row.close > 0.0) {
            return Err(CorpusError::NonPositivePrice(row.date));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CorpusError::EmptySeries);
    }
    rows.sort_by_key(|r| r.date);
    PriceSeries::new(
        ticker,
        rows.iter().map(|r| r.date).collect(),
        rows.iter().map(|r| r.close).collect(),
        rows.iter().map(|r| r.volume).collect(),
    )
}

pub fn load_price_series(path: impl AsRef<Path>, ticker: &str) -> Result<PriceSeries, CorpusError> {
    parse_price_series(File::open(path.as_ref())?, ticker)
}

pub fn parse_index_series<R: Read>(reader: R, name: &str) -> Result<IndexSeries, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<IndexRow> = Vec::new();
    for rec in rdr.deserialize() {
        let row: IndexRow = rec.map_err(csv_err)?;
        if !(row.close.is_finite() && row.close > 0.0) {
            return Err(CorpusError::NonPositivePrice(row.date));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CorpusError::EmptySeries);
    }
    rows.sort_by_key(|r| r.date);
    IndexSeries::new(
        name,
        rows.iter().map(|r| r.date).collect(),
        rows.iter().map(|r| r.close).collect(),
    )
}

pub fn load_index_series(path: impl AsRef<Path>, name: &str) -> Result<IndexSeries, CorpusError> {
    parse_index_series(File::open(path.as_ref())?, name)
}

pub fn write_price_series(path: impl AsRef<Path>, s: &PriceSeries) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    w.write_record(["date", "close", "volume"])
        .map_err(csv_err)?;
    for i in 0..s.len() {
        w.write_record([
            s.dates[i].to_string(),
            s.close[i].to_string(),
            s.volume[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_index_series(path: impl AsRef<Path>, s: &IndexSeries) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    w.write_record(["date", "close"]).map_err(csv_err)?;
    for i in 0..s.len() {
        w.write_record([s.dates[i].to_string(), s.close[i].to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Maps `(dates, values)` observations onto `calendar`, forward-filling gaps from the
/// last observation at or before each calendar date. Returns, per calendar date, the
/// filled value and whether the date was observed exactly.
fn forward_fill(
    dates: &[NaiveDate],
    values: &[f64],
    calendar: &[NaiveDate],
) -> Result<Vec<(f64, Option<usize>)>, CorpusError> {
    check_increasing(calendar)?;
    let Some(first) = calendar.first() else {
        return Err(CorpusError::EmptySeries);
    };
    if *first < dates[0] {
        return Err(CorpusError::LeadingGap {
            calendar_start: *first,
            first_observation: dates[0],
        });
    }
    let mut out = Vec::with_capacity(calendar.len());
    let mut j = 0usize;
    for day in calendar {
        while j + 1 < dates.len() && dates[j + 1] <= *day {
            j += 1;
        }
        let exact = (dates[j] == *day).then_some(j);
        out.push((values[j], exact));
    }
    Ok(out)
}

/// Re-indexes `series` onto `calendar`: missing days carry the last close with zero volume.
pub fn align_to_calendar(
    series: &PriceSeries,
    calendar: &[NaiveDate],
) -> Result<PriceSeries, CorpusError> {
    let filled = forward_fill(&series.dates, &series.close, calendar)?;
    let close = filled.iter().map(|(c, _)| *c).collect();
    let volume = filled
        .iter()
        .map(|(_, exact)| exact.map_or(0.0, |j| series.volume[j]))
        .collect();
    PriceSeries::new(series.ticker.clone(), calendar.to_vec(), close, volume)
}

pub fn align_index_to_calendar(
    series: &IndexSeries,
    calendar: &[NaiveDate],
) -> Result<IndexSeries, CorpusError> {
    let filled = forward_fill(&series.dates, &series.close, calendar)?;
    IndexSeries::new(
        series.name.clone(),
        calendar.to_vec(),
        filled.iter().map(|(c, _)| *c).collect(),
    )
}

/// Next-trading-day convention: index of the first trading date at or after `date`.
pub fn event_day_index(dates: &[NaiveDate], date: NaiveDate) -> Option<usize> {
    let i = dates.partition_point(|d| *d < date);
    (i < dates.len()).then_some(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn three_rows() {
        let csv = "date,close,volume\n2020-01-02,10,100\n2020-01-03,11,120\n2020-01-06,12,90\n";
        let s = parse_price_series(csv.as_bytes(), "ABC").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.close(), &[10.0, 11.0, 12.0]);
    }

    #[test]
    fn zero_close_rejected() {
        let csv = "date,close,volume\n2020-01-02,10,100\n2020-01-03,0,120\n";
        assert!(matches!(
            parse_price_series(csv.as_bytes(), "ABC"),
            Err(CorpusError::NonPositivePrice(x)) if x == d("2020-01-03")
        ));
    }

    #[test]
    fn unsorted_rows_sorted() {
        let csv = "date,close,volume\n2020-01-06,12,90\n2020-01-02,10,100\n2020-01-03,11,120\n";
        let s = parse_price_series(csv.as_bytes(), "ABC").unwrap();
        assert_eq!(
            s.dates(),
            &[d("2020-01-02"), d("2020-01-03"), d("2020-01-06")]
        );
        assert_eq!(s.close(), &[10.0, 11.0, 12.0]);
    }

    #[test]
    fn empty_csv() {
        assert!(matches!(
            parse_price_series("date,close,volume\n".as_bytes(), "X"),
            Err(CorpusError::EmptySeries)
        ));
    }

    fn sample() -> PriceSeries {
        PriceSeries::new(
            "ABC",
            vec![d("2020-01-02"), d("2020-01-03"), d("2020-01-07")],
            vec![10.0, 11.0, 12.0],
            vec![100.0, 120.0, 90.0],
        )
        .unwrap()
    }

    #[test]
    fn align_identity() {
        let s = sample();
        assert_eq!(align_to_calendar(&s, s.dates()).unwrap(), s);
    }

    #[test]
    fn align_fills_gap() {
        let s = sample();
        let cal = vec![
            d("2020-01-02"),
            d("2020-01-03"),
            d("2020-01-06"),
            d("2020-01-07"),
        ];
        let a = align_to_calendar(&s, &cal).unwrap();
        assert_eq!(a.close(), &[10.0, 11.0, 11.0, 12.0]);
        assert_eq!(a.volume(), &[100.0, 120.0, 0.0, 90.0]);
    }

    #[test]
    fn align_leading_gap() {
        let s = sample();
        let cal = vec![d("2020-01-01"), d("2020-01-02")];
        assert!(matches!(
            align_to_calendar(&s, &cal),
            Err(CorpusError::LeadingGap { .. })
        ));
    }

    #[test]
    fn next_trading_day() {
        let dates = [d("2020-01-03"), d("2020-01-06")];
        // Saturday maps to Monday.
        assert_eq!(event_day_index(&dates, d("2020-01-04")), Some(1));
        assert_eq!(event_day_index(&dates, d("2020-01-03")), Some(0));
        assert_eq!(event_day_index(&dates, d("2020-01-07")), None);
    }

    proptest! {
        #[test]
        fn align_is_idempotent(keep in proptest::collection::vec(any::<bool>(), 30), shift in 0usize..5) {
            let start = d("2021-03-01");
            let all: Vec<NaiveDate> = (0..30).map(|i| start + chrono::Duration::days(i)).collect();
            let mut dates = vec![all[0]];
            dates.extend(all.iter().zip(&keep).skip(1).filter(|(_, k)| **k).map(|(x, _)| *x));
            let n = dates.len();
            let s = PriceSeries::new("T", dates, (0..n).map(|i| 10.0 + i as f64).collect(), vec![5.0; n]).unwrap();
            let cal = &all[shift..];
            let once = align_to_calendar(&s, cal).unwrap();
            let twice = align_to_calendar(&once, cal).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
