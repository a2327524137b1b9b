//! Abnormal returns, NCAR, price-change classes and the statistical battery.

mod stats;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Polarity;
use crate::forecast::{actual_path, EventWindow, ForecastError, Forecaster, NormalizedPath};

pub use stats::{
    kolmogorov_sf, ks_normality, ks_statistic, ks_test, mann_whitney_u, mann_whitney_u_with,
    midranks, moments, KsResult, MomentSummary, MwuMethod, MwuResult, MWU_EXACT_LIMIT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpactError {
    #[error("path lengths {actual} and {expected} do not match horizon {horizon}")]
    LengthMismatch {
        actual: usize,
        expected: usize,
        horizon: usize,
    },
    #[error("value is not finite")]
    NonFinite,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("sample is empty")]
    EmptySample,
    #[error("exact enumeration over {0} pooled values is too large")]
    TooLargeForExact(usize),
    #[error("neutral band width must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("event '{0}' has no announcement polarity")]
    MissingLabel(String),
    #[error("{n} values cannot fill {groups} groups")]
    TooFewForGroups { n: usize, groups: usize },
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

/// `sum_t (actual[t] - expected[t]) / sum_t expected[t]` over `t = 1..=T`.
pub fn ncar(
    actual: &NormalizedPath,
    expected: &NormalizedPath,
    horizon: usize,
) -> Result<f64, ImpactError> {
    let (a, e) = (actual.values(), expected.values());
    if a.len() != horizon + 1 || e.len() != horizon + 1 {
        return Err(ImpactError::LengthMismatch {
            actual: a.len(),
            expected: e.len(),
            horizon,
        });
    }
    let num: f64 = a[1..].iter().zip(&e[1..]).map(|(x, y)| x - y).sum();
    let den: f64 = e[1..].iter().sum();
    debug_assert!(den > 0.0);
    Ok(num / den)
}

/// Price-change range of an event, ordered from most negative to most positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceClass {
    ExtremelyNegative,
    ModeratelyNegative,
    Negative,
    Positive,
    ModeratelyPositive,
    ExtremelyPositive,
}

pub const N_CLASSES: usize = 6;

/// Upper (inclusive) bounds of the first five classes.
pub const CLASS_BOUNDS: [f64; 5] = [-0.28, -0.14, 0.0, 0.14, 0.28];

impl PriceClass {
    pub const ALL: [PriceClass; N_CLASSES] = [
        PriceClass::ExtremelyNegative,
        PriceClass::ModeratelyNegative,
        PriceClass::Negative,
        PriceClass::Positive,
        PriceClass::ModeratelyPositive,
        PriceClass::ExtremelyPositive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PriceClass> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PriceClass::ExtremelyNegative => "extremely_negative",
            PriceClass::ModeratelyNegative => "moderately_negative",
            PriceClass::Negative => "negative",
            PriceClass::Positive => "positive",
            PriceClass::ModeratelyPositive => "moderately_positive",
            PriceClass::ExtremelyPositive => "extremely_positive",
        }
    }

    /// Range label such as `(-0.14, 0]`.
    pub fn range(self) -> String {
        let i = self.index();
        let lo = if i == 0 {
            "-inf".to_string()
        } else {
            CLASS_BOUNDS[i - 1].to_string()
        };
        match CLASS_BOUNDS.get(i) {
            Some(hi) => format!("({lo}, {hi}]"),
            None => format!("({lo}, +inf)"),
        }
    }
}

impl fmt::Display for PriceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn bin_class(value: f64) -> Result<PriceClass, ImpactError> {
    if !value.is_finite() {
        return Err(ImpactError::NonFinite);
    }
    let i = CLASS_BOUNDS
        .iter()
        .position(|b| value <= *b)
        .unwrap_or(CLASS_BOUNDS.len());
    Ok(PriceClass::ALL[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactResult {
    pub event_id: String,
    pub actual: NormalizedPath,
    pub expected: NormalizedPath,
    pub ar: Vec<f64>,
    pub ncar: f64,
    pub price_class: PriceClass,
}

impl ImpactResult {
    pub fn new(
        event_id: impl Into<String>,
        actual: NormalizedPath,
        expected: NormalizedPath,
        horizon: usize,
    ) -> Result<Self, ImpactError> {
        let value = ncar(&actual, &expected, horizon)?;
        let ar = actual.values()[1..]
            .iter()
            .zip(&expected.values()[1..])
            .map(|(a, e)| a - e)
            .collect();
        Ok(ImpactResult {
            event_id: event_id.into(),
            price_class: bin_class(value)?,
            ar,
            ncar: value,
            actual,
            expected,
        })
    }
}

/// Realized and expected paths for the `horizon` days starting on the event day.
pub fn event_impact(
    forecaster: &dyn Forecaster,
    event: &EventWindow<'_>,
    horizon: usize,
) -> Result<ImpactResult, ImpactError> {
    let expected = forecaster.forecast(event, horizon)?;
    let actual = actual_path(event.stock, event.event_day, horizon)?;
    ImpactResult::new(event.id, actual, expected, horizon)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NonAnnouncementSample {
    pub values: Vec<(String, f64)>,
    pub skipped: Vec<(String, String)>,
}

impl NonAnnouncementSample {
    pub fn ncars(&self) -> Vec<f64> {
        self.values.iter().map(|(_, v)| *v).collect()
    }
}

/// NCAR over the `horizon` days that end the day before each event, with the
/// forecaster fitted on the history preceding that window.
pub fn non_announcement_sample(
    forecaster: &dyn Forecaster,
    events: &[EventWindow<'_>],
    horizon: usize,
) -> NonAnnouncementSample {
    let results: Vec<Result<f64, ImpactError>> = events
        .par_iter()
        .map(|ev| {
            let pseudo = ev.shifted_back(horizon).ok_or(ImpactError::Forecast(
                ForecastError::InsufficientHistory {
                    needed: horizon,
                    available: ev.event_day,
                    event_day: ev.event_day,
                },
            ))?;
            Ok(event_impact(forecaster, &pseudo, horizon)?.ncar)
        })
        .collect();
    let mut out = NonAnnouncementSample::default();
    for (ev, r) in events.iter().zip(results) {
        match r {
            Ok(v) => out.values.push((ev.id.to_string(), v)),
            Err(e) => out.skipped.push((ev.id.to_string(), e.to_string())),
        }
    }
    out
}

/// Standard deviation of the NCARs of neutral announcements.
pub fn sigma_neutral(neutral_ncars: &[f64]) -> Result<f64, ImpactError> {
    Ok(moments(neutral_ncars)?.std)
}

/// Polarity implied by the price move; values within `sigma/2` of zero are neutral.
pub fn polarity_from_ncar(value: f64, sigma_neutral: f64) -> Result<Polarity, ImpactError> {
    if !value.is_finite() {
        return Err(ImpactError::NonFinite);
    }
    if !(sigma_neutral > 0.0 && sigma_neutral.is_finite()) {
        return Err(ImpactError::InvalidSigma(sigma_neutral));
    }
    let half = sigma_neutral / 2.0;
    Ok(if value > half {
        Polarity::Positive
    } else if value < -half {
        Polarity::Negative
    } else {
        Polarity::Neutral
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledNcar<'a> {
    pub event_id: &'a str,
    pub polarity: Option<Polarity>,
    pub ncar: f64,
}

/// Rows: announcement polarity; columns: polarity implied by NCAR. Both axes use
/// `Polarity::ALL` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchMatrix {
    pub counts: [[usize; 3]; 3],
}

impl MismatchMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn rates(&self) -> [[f64; 3]; 3] {
        let t = self.total().max(1) as f64;
        self.counts.map(|row| row.map(|c| c as f64 / t))
    }

    pub fn get(&self, announced: Polarity, implied: Polarity) -> usize {
        self.counts[announced.index()][implied.index()]
    }
}

pub fn mismatch_matrix(
    events: &[LabeledNcar<'_>],
    sigma_neutral: f64,
) -> Result<MismatchMatrix, ImpactError> {
    let mut counts = [[0usize; 3]; 3];
    for ev in events {
        let announced = ev
            .polarity
            .ok_or_else(|| ImpactError::MissingLabel(ev.event_id.to_string()))?;
        let implied = polarity_from_ncar(ev.ncar, sigma_neutral)?;
        counts[announced.index()][implied.index()] += 1;
    }
    Ok(MismatchMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub covariate_min: f64,
    pub covariate_max: f64,
    pub median_ncar: f64,
    pub count: usize,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

/// Sorts by covariate and cuts into `n_groups` contiguous groups whose sizes differ
/// by at most one; the larger groups come first.
pub fn equal_group_analysis(
    values: &[f64],
    covariate: &[f64],
    n_groups: usize,
) -> Result<Vec<GroupSummary>, ImpactError> {
    if values.len() != covariate.len() {
        return Err(ImpactError::LengthMismatch {
            actual: values.len(),
            expected: covariate.len(),
            horizon: 0,
        });
    }
    if n_groups == 0 || values.len() < n_groups {
        return Err(ImpactError::TooFewForGroups {
            n: values.len(),
            groups: n_groups,
        });
    }
    if values.iter().chain(covariate).any(|v| !v.is_finite()) {
        return Err(ImpactError::NonFinite);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| covariate[a].total_cmp(&covariate[b]));
    let (base, extra) = (values.len() / n_groups, values.len() % n_groups);
    let mut out = Vec::with_capacity(n_groups);
    let mut start = 0;
    for g in 0..n_groups {
        let size = base + usize::from(g < extra);
        let idx = &order[start..start + size];
        let ncars: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        out.push(GroupSummary {
            covariate_min: covariate[idx[0]],
            covariate_max: covariate[idx[size - 1]],
            median_ncar: median(&ncars).expect("non-empty group"),
            count: size,
        });
        start += size;
    }
    Ok(out)
}
