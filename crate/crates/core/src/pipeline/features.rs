use std::collections::BTreeSet;

use crate::boost::{BoostError, FeatureMatrix};
use crate::corpus::{Announcement, FundamentalsTable, Polarity, PriceSeries};
use crate::market::{market_features, MarketConfig};

/// Inputs for one event's feature row.
pub struct EventInputs<'a> {
    pub announcement: &'a Announcement,
    pub series: &'a PriceSeries,
    pub index_close: Option<&'a [f64]>,
    pub event_day: usize,
}

const MARKET_COLUMNS: [&str; 6] = [
    "peaks_per_year",
    "last_peak_duration",
    "trend_30",
    "trend_prev_30",
    "index_trend_30",
    "volatility_200",
];
const COMPANY_COLUMNS: [&str; 5] = [
    "portfolio_size",
    "company_age_years",
    "employees",
    "shareholders",
    "shares_outstanding",
];

/// Market, company and announcement features, one row per event in the given order.
/// Events must be sorted by date. Unavailable values are missing, never imputed.
pub fn event_features(
    events: &[EventInputs<'_>],
    fundamentals: &FundamentalsTable,
    market: &MarketConfig,
) -> Result<FeatureMatrix, BoostError> {
    let chapters: Vec<char> = events
        .iter()
        .flat_map(|e| e.announcement.icd10.iter().map(|c| c.chapter()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let items = fundamentals.item_names();

    let mut schema: Vec<String> = [
        "polarity_positive",
        "polarity_negative",
        "polarity_neutral",
        "phase",
        "icd_count",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    schema.push("nosology_prior_events".into());
    schema.extend(chapters.iter().map(|c| format!("icd_chapter_{c}")));
    schema.extend(MARKET_COLUMNS.iter().map(|s| s.to_string()));
    schema.extend(COMPANY_COLUMNS.iter().map(|s| s.to_string()));
    schema.extend(items.iter().cloned());

    let rows: Vec<Vec<Option<f64>>> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let a = e.announcement;
            let flag = |p: Polarity| a.polarity.map(|q| f64::from(u8::from(q == p)));
            let mut row = vec![
                flag(Polarity::Positive),
                flag(Polarity::Negative),
                flag(Polarity::Neutral),
                a.phase.and_then(|p| p.ordinal()).map(f64::from),
                Some(a.icd10.len() as f64),
            ];
            let prior = events[..i]
                .iter()
                .filter(|o| {
                    o.announcement.date < a.date
                        && o.announcement.icd10.iter().any(|c| a.icd10.contains(c))
                })
                .count();
            row.push(Some(prior as f64));
            row.extend(chapters.iter().map(|ch| {
                Some(f64::from(u8::from(
                    a.icd10.iter().any(|c| c.chapter() == *ch),
                )))
            }));

            match market_features(e.series, e.index_close, e.event_day, market) {
                Ok(m) => row.extend([
                    Some(m.peaks_per_year),
                    Some(m.last_peak_duration as f64),
                    Some(m.trend_30),
                    Some(m.trend_prev_30),
                    m.index_trend_30,
                    Some(m.volatility_200),
                ]),
                Err(_) => row.extend([None; MARKET_COLUMNS.len()]),
            }

            let f = fundamentals.latest_before(&a.ticker, a.date);
            row.push(f.map(|f| f64::from(f.portfolio_size)));
            row.push(f.map(|f| f.age_years(a.date)));
            row.push(f.and_then(|f| f.employees).map(|v| v as f64));
            row.push(f.and_then(|f| f.shareholders).map(|v| v as f64));
            row.push(f.and_then(|f| f.shares_outstanding));
            for name in &items {
                let value = f.and_then(|f| {
                    let (group, key) = name.split_once('.')?;
                    match group {
                        "income" => f.income_items.get(key),
                        "balance" => f.balance_items.get(key),
                        "cashflow" => f.cashflow_items.get(key),
                        _ => None,
                    }
                    .copied()
                });
                row.push(value);
            }
            row
        })
        .collect();
    FeatureMatrix::from_rows(schema, &rows)
}
