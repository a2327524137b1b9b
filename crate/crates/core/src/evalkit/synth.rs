//! Seeded synthetic market: random-walk prices around a sector index, announcements
//! with planted abnormal returns, planted volume peaks and annual fundamentals.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boost::FeatureMatrix;
use crate::corpus::{
    Announcement, CorpusError, Dataset, Fundamentals, FundamentalsTable, Icd10, IndexSeries, Phase,
    Polarity, PriceSeries, RawReport, INDEX_NAME,
};
use crate::forecast::DEFAULT_ESTIMATION_WINDOW;
use crate::graph::{build_event_graph, EventGraph, DEFAULT_MAX_GAP_DAYS};
use crate::impact::{PriceClass, N_CLASSES};
use crate::market::{nearest_rank, MarketConfig, DEFAULT_WINDOW_QUANTILE};

pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Distribution of the planted multiplicative jump `s` applied on the event day: the close
/// is multiplied by `1 + s`, which shifts the event's NCAR by about `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_companies: usize,
    pub years: usize,
    pub n_events: usize,
    pub positive: EffectSpec,
    pub negative: EffectSpec,
    pub neutral: EffectSpec,
    /// Share of the previous same-company effect (within a year) added to each event's effect.
    pub graph_signal: f64,
    /// Planted volume peaks per company and year.
    pub volume_peak_rate: f64,
    /// Peak durations are drawn uniformly from 1..=max_peak_duration trading days.
    pub max_peak_duration: usize,
    /// Post-event window the events are spaced for.
    pub post_window: usize,
    /// Probabilities of positive, negative, neutral announcements.
    pub polarity_mix: [f64; 3],
    /// Share of polar texts phrased only with second-round keywords.
    pub novel_keyword_rate: f64,
    /// Probability that an optional fundamentals field or report group is absent.
    pub missing_rate: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(seed: u64) -> Self {
        SynthConfig {
            n_companies: 24,
            years: 5,
            n_events: 150,
            positive: EffectSpec {
                mean: 0.05,
                std: 0.03,
            },
            negative: EffectSpec {
                mean: -0.2,
                std: 0.05,
            },
            neutral: EffectSpec {
                mean: 0.0,
                std: 0.02,
            },
            graph_signal: 0.0,
            volume_peak_rate: 3.0,
            max_peak_duration: 22,
            post_window: 20,
            polarity_mix: [0.55, 0.3, 0.15],
            novel_keyword_rate: 0.2,
            missing_rate: 0.15,
            seed,
        }
    }

    fn effect(&self, p: Polarity) -> EffectSpec {
        match p {
            Polarity::Positive => self.positive,
            Polarity::Negative => self.negative,
            Polarity::Neutral => self.neutral,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_companies == 0 || self.years == 0 || self.n_events == 0 {
            return bad("n_companies, years and n_events must be positive");
        }
        if self.max_peak_duration == 0 || self.post_window == 0 {
            return bad("max_peak_duration and post_window must be positive");
        }
        if !(self.volume_peak_rate >= 0.0 && self.volume_peak_rate.is_finite()) {
            return bad("volume_peak_rate must be non-negative");
        }
        for e in [self.positive, self.negative, self.neutral] {
            if !(e.mean.is_finite() && e.std >= 0.0 && e.std.is_finite()) || e.mean <= -0.9 {
                return bad("effects need a finite mean above -0.9 and a non-negative std");
            }
        }
        let mix = self.polarity_mix;
        if mix.iter().any(|p| !(*p >= 0.0)) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("polarity_mix must be non-negative and sum to 1");
        }
        for (name, p) in [
            ("novel_keyword_rate", self.novel_keyword_rate),
            ("missing_rate", self.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::InvalidConfig(format!(
                    "{name} must be in [0, 1]"
                )));
            }
        }
        if !self.graph_signal.is_finite() {
            return bad("graph_signal must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub id: String,
    pub ticker: String,
    /// Index of the event day in the trading calendar.
    pub event_day: usize,
    pub polarity: Polarity,
    pub planted_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    pub events: Vec<EventTruth>,
    /// Durations of every planted volume peak, all companies.
    pub peak_durations: Vec<usize>,
    /// 90th-percentile (nearest-rank) peak duration.
    pub post_window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: Dataset,
    pub truth: SynthTruth,
}

impl SynthDataset {
    /// Writes the dataset layout plus `truth.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        self.dataset.write_dir(dir)?;
        let mut json = serde_json::to_string_pretty(&self.truth)?;
        json.push('\n');
        std::fs::write(dir.join(TRUTH_FILE), json)?;
        Ok(())
    }
}

const DISEASES: &[(&str, &str)] = &[
    ("C34", "non-small cell lung cancer"),
    ("C50", "breast cancer"),
    ("C61", "prostate cancer"),
    ("C18", "colorectal cancer"),
    ("C90", "multiple myeloma"),
    ("E11", "type 2 diabetes"),
    ("E66", "obesity"),
    ("G30", "alzheimer disease"),
    ("G20", "parkinson disease"),
    ("G35", "multiple sclerosis"),
    ("I50", "heart failure"),
    ("I10", "hypertension"),
    ("J45", "asthma"),
    ("J44", "chronic obstructive pulmonary disease"),
    ("M05", "rheumatoid arthritis"),
    ("K50", "crohn disease"),
    ("L40", "psoriasis"),
    ("F32", "major depressive disorder"),
    ("F20", "schizophrenia"),
    ("B20", "hiv infection"),
];

const POSITIVE_TEXTS: &[&str] = &[
    "{drug} meets primary endpoint in phase {p} trial in {disease}",
    "phase {p} data show improved survival with {drug} in {disease}",
    "regulators approve {drug} for {disease} following phase {p} results",
];
const POSITIVE_NOVEL_TEXTS: &[&str] = &[
    "phase {p} results demonstrate durable responses to {drug} in {disease}",
    "encouraging phase {p} data for {drug} in {disease}",
    "filing for {drug} in {disease} accepted after phase {p} readout",
];
const NEGATIVE_TEXTS: &[&str] = &[
    "phase {p} trial of {drug} in {disease} failed to meet its primary endpoint",
    "{drug} did not reach statistical significance in phase {p} {disease} study",
    "dosing halted in phase {p} study of {drug} in {disease}",
    "{drug} showed no differentiation from placebo in phase {p} {disease} trial",
];
const NEGATIVE_NOVEL_TEXTS: &[&str] = &[
    "phase {p} study of {drug} in {disease} terminated for futility",
    "development of {drug} in {disease} discontinued after phase {p}",
    "enrollment paused in phase {p} trial of {drug} in {disease}",
    "phase {p} {drug} data insufficient to support filing in {disease}",
];
const NEUTRAL_TEXTS: &[&str] = &[
    "completes enrollment in phase {p} trial of {drug} in {disease}",
    "to present phase {p} {drug} data in {disease} at medical meeting",
    "first patient dosed in phase {p} study of {drug} in {disease}",
];

const START: (i32, u32, u32) = (2015, 1, 5);
/// Trading days before the first possible event: the longest feature lookback plus margin.
const WARMUP: usize = 260;
const TRADING_DAYS_PER_YEAR: usize = 252;

fn weekday_calendar(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(START.0, START.1, START.2).expect("valid start");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn ticker_name(i: usize) -> String {
    let a = (b'A' + (i / 26 % 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    format!("PH{a}{b}")
}

/// `k` starts for blocks of the given lengths inside `[lo, hi)`, in order, with at
/// least `gap` free days between consecutive blocks. `None` if they do not fit.
fn place_blocks(
    rng: &mut ChaCha8Rng,
    lengths: &[usize],
    gap: usize,
    lo: usize,
    hi: usize,
) -> Option<Vec<usize>> {
    if lengths.is_empty() {
        return Some(Vec::new());
    }
    let used: usize = lengths.iter().sum::<usize>() + gap * (lengths.len() - 1);
    let slack = (hi - lo).checked_sub(used)?;
    let mut offsets: Vec<usize> = (0..lengths.len())
        .map(|_| rng.random_range(0..=slack))
        .collect();
    offsets.sort_unstable();
    let mut starts = Vec::with_capacity(lengths.len());
    let mut cursor = lo;
    for (i, (&len, &off)) in lengths.iter().zip(&offsets).enumerate() {
        let prev = if i == 0 { 0 } else { offsets[i - 1] };
        cursor += off - prev;
        starts.push(cursor);
        cursor += len + gap;
    }
    Some(starts)
}

fn draw_polarity(rng: &mut ChaCha8Rng, mix: [f64; 3]) -> Polarity {
    let u: f64 = rng.random();
    if u < mix[0] {
        Polarity::Positive
    } else if u < mix[0] + mix[1] {
        Polarity::Negative
    } else {
        Polarity::Neutral
    }
}

fn render_text(
    rng: &mut ChaCha8Rng,
    ticker: &str,
    polarity: Polarity,
    novel: bool,
    phase: u8,
    disease: &str,
) -> String {
    let pool = match (polarity, novel) {
        (Polarity::Positive, false) => POSITIVE_TEXTS,
        (Polarity::Positive, true) => POSITIVE_NOVEL_TEXTS,
        (Polarity::Negative, false) => NEGATIVE_TEXTS,
        (Polarity::Negative, true) => NEGATIVE_NOVEL_TEXTS,
        (Polarity::Neutral, _) => NEUTRAL_TEXTS,
    };
    let drug = format!("TP-{}", rng.random_range(100..1000));
    let body = pool
        .choose(rng)
        .expect("non-empty pool")
        .replace("{drug}", &drug)
        .replace("{p}", &phase.to_string())
        .replace("{disease}", disease);
    format!("{ticker}: {body}")
}

struct Company {
    ticker: String,
    alpha: f64,
    beta: f64,
    sigma: f64,
    start_price: f64,
    volume_level: f64,
    portfolio: u32,
    weight: f64,
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_days = WARMUP + config.years * TRADING_DAYS_PER_YEAR + config.post_window + 1;
    let calendar = weekday_calendar(n_days);

    let index_returns: Vec<f64> = {
        let d = Normal::new(0.0003, 0.012).expect("valid normal");
        (0..n_days).map(|_| d.sample(&mut rng)).collect()
    };
    let mut index_close = Vec::with_capacity(n_days);
    let mut level = 1000.0;
    for (i, r) in index_returns.iter().enumerate() {
        if i > 0 {
            level *= 1.0 + r;
        }
        index_close.push(level);
    }

    let companies: Vec<Company> = (0..config.n_companies)
        .map(|i| Company {
            ticker: ticker_name(i),
            alpha: rng.random_range(-0.0002..0.0005),
            beta: rng.random_range(0.6..1.4),
            sigma: rng.random_range(0.012..0.025),
            start_price: rng.random_range(5.0..100.0),
            volume_level: rng.random_range(2e5..5e6),
            portfolio: (25.0 * rng.random::<f64>().powi(3)).floor() as u32,
            weight: rng.random_range(0.3..1.0),
        })
        .collect();

    // Events per company, spaced so that no event's estimation window, post window
    // or pre-event pseudo window contains another event.
    let min_gap = 2 * config.post_window + DEFAULT_ESTIMATION_WINDOW + 10;
    let lo = WARMUP;
    let hi = n_days - config.post_window - 1;
    let capacity = (hi - lo + min_gap) / (min_gap + 1);
    if config.n_events > capacity * config.n_companies {
        return Err(SynthError::InvalidConfig(format!(
            "{} events do not fit: at most {} per company over {} years",
            config.n_events, capacity, config.years
        )));
    }
    let mut counts = vec![0usize; config.n_companies];
    let total_w: f64 = companies.iter().map(|c| c.weight).sum();
    for _ in 0..config.n_events {
        loop {
            let mut u = rng.random::<f64>() * total_w;
            let mut k = 0;
            while k + 1 < companies.len() && u >= companies[k].weight {
                u -= companies[k].weight;
                k += 1;
            }
            if counts[k] < capacity {
                counts[k] += 1;
                break;
            }
        }
    }

    struct Draft {
        ticker: usize,
        day: usize,
        polarity: Polarity,
        own_shift: f64,
    }
    let mut drafts = Vec::new();
    for (c, &k) in counts.iter().enumerate() {
        let days = place_blocks(&mut rng, &vec![1; k], min_gap, lo, hi).expect("capacity checked");
        for day in days {
            let polarity = draw_polarity(&mut rng, config.polarity_mix);
            let e = config.effect(polarity);
            let z: f64 = StandardNormal.sample(&mut rng);
            drafts.push(Draft {
                ticker: c,
                day,
                polarity,
                own_shift: (e.mean + e.std * z).max(-0.9),
            });
        }
    }
    drafts.sort_by_key(|d| (d.day, d.ticker));

    let mut last_shift: Vec<Option<(usize, f64)>> = vec![None; config.n_companies];
    let mut truth_events = Vec::with_capacity(drafts.len());
    let mut announcements = Vec::with_capacity(drafts.len());
    for (i, d) in drafts.iter().enumerate() {
        let carried = match last_shift[d.ticker] {
            Some((day, s))
                if (calendar[d.day] - calendar[day]).num_days() < DEFAULT_MAX_GAP_DAYS =>
            {
                s
            }
            _ => 0.0,
        };
        let shift = (d.own_shift + config.graph_signal * carried).max(-0.9);
        last_shift[d.ticker] = Some((d.day, shift));
        let id = format!("EV{i:05}");
        let ticker = companies[d.ticker].ticker.clone();
        let mut date = calendar[d.day];
        if date.weekday() == Weekday::Mon && rng.random::<f64>() < 0.3 {
            date = date - Days::new(rng.random_range(1..=2));
        }
        let n_codes = if rng.random::<f64>() < 0.2 { 2 } else { 1 };
        let picks: Vec<&(&str, &str)> = DISEASES.choose_multiple(&mut rng, n_codes).collect();
        let phase_n: u8 = rng.random_range(1..=3);
        let novel =
            d.polarity != Polarity::Neutral && rng.random::<f64>() < config.novel_keyword_rate;
        let text = render_text(&mut rng, &ticker, d.polarity, novel, phase_n, picks[0].1);
        announcements.push(Announcement {
            id: id.clone(),
            ticker: ticker.clone(),
            date,
            text,
            icd10: picks
                .iter()
                .map(|(code, _)| Icd10::new(code).expect("valid code"))
                .collect(),
            phase: Some([Phase::I, Phase::II, Phase::III][phase_n as usize - 1]),
            polarity: None,
        });
        truth_events.push(EventTruth {
            id,
            ticker,
            event_day: d.day,
            polarity: d.polarity,
            planted_shift: shift,
        });
    }

    let mut jumps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); config.n_companies];
    for (d, t) in drafts.iter().zip(&truth_events) {
        jumps[d.ticker].insert(d.day, t.planted_shift);
    }

    let baseline_window = MarketConfig::default().baseline_window;
    let mut prices = BTreeMap::new();
    let mut peak_durations = Vec::new();
    // Sparse enough that no trailing baseline holds more than one full peak, so the
    // median stays at the quiet level and every planted peak is detected as planted.
    let peak_gap = baseline_window / 2 + config.max_peak_duration;
    for (c, co) in companies.iter().enumerate() {
        let mut close = Vec::with_capacity(n_days);
        let mut p = co.start_price;
        for (t, r_m) in index_returns.iter().enumerate() {
            if t > 0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                p *= 1.0 + co.alpha + co.beta * r_m + co.sigma * z;
                if let Some(s) = jumps[c].get(&t) {
                    p *= 1.0 + s;
                }
            }
            close.push(p);
        }
        // Bounded noise keeps quiet days below the hot threshold and peak days above it.
        let mut volume: Vec<f64> = (0..n_days)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (co.volume_level * (0.2 * z.clamp(-2.5, 2.5)).exp()).round()
            })
            .collect();
        let n_peaks = (config.volume_peak_rate * config.years as f64).round() as usize;
        let durations: Vec<usize> = (0..n_peaks)
            .map(|_| rng.random_range(1..=config.max_peak_duration))
            .collect();
        let starts = place_blocks(&mut rng, &durations, peak_gap, baseline_window + 10, n_days)
            .ok_or_else(|| {
                SynthError::InvalidConfig("volume peaks do not fit in the history".into())
            })?;
        for (&s, &len) in starts.iter().zip(&durations) {
            for v in &mut volume[s..s + len] {
                *v = (co.volume_level * rng.random_range(4.5..7.0)).round();
            }
        }
        peak_durations.extend(durations);
        prices.insert(
            co.ticker.clone(),
            PriceSeries::new(co.ticker.clone(), calendar.clone(), close, volume)?,
        );
    }

    let fundamentals = synth_fundamentals(&mut rng, &companies, &calendar, config.missing_rate)?;
    let post_window = if peak_durations.is_empty() {
        config.post_window
    } else {
        nearest_rank(&peak_durations, DEFAULT_WINDOW_QUANTILE).expect("non-empty durations")
    };
    Ok(SynthDataset {
        dataset: Dataset {
            announcements,
            prices,
            index: Some(IndexSeries::new(INDEX_NAME, calendar, index_close)?),
            fundamentals,
        },
        truth: SynthTruth {
            seed: config.seed,
            events: truth_events,
            peak_durations,
            post_window,
        },
    })
}

fn synth_fundamentals(
    rng: &mut ChaCha8Rng,
    companies: &[Company],
    calendar: &[NaiveDate],
    missing: f64,
) -> Result<FundamentalsTable, SynthError> {
    let first = calendar[0].year() - 1;
    let last = calendar[calendar.len() - 1].year();
    let mut table = FundamentalsTable::new();
    for co in companies {
        let ipo =
            NaiveDate::from_ymd_opt(rng.random_range(1995..2014), rng.random_range(1..=12), 1)
                .expect("valid");
        let shares = rng.random_range(1e7..5e8f64).round();
        let mut portfolio = co.portfolio;
        for year in first..=last {
            if rng.random::<f64>() < 0.15 {
                portfolio += 1;
            }
            let mut raw = RawReport::default();
            if portfolio > 0 && rng.random::<f64>() >= missing {
                let revenue = (portfolio as f64 * rng.random_range(20.0..80.0) * 1e6).round();
                raw.total_revenue = Some(revenue);
                raw.income.insert(
                    "cost_of_revenue".into(),
                    (revenue * rng.random_range(0.2..0.5)).round(),
                );
                raw.income.insert(
                    "research_and_development".into(),
                    (revenue * rng.random_range(0.1..1.5)).round(),
                );
            }
            if rng.random::<f64>() >= missing {
                let mut cfo = (rng.random_range(-50.0..50.0f64) * 1e6).round();
                if cfo == 0.0 {
                    cfo = 1e6;
                }
                raw.cash_from_operating_activities = Some(cfo);
                let assets = (rng.random_range(50.0..2000.0) * 1e6f64).round();
                raw.balance.insert("total_assets".into(), assets);
                raw.balance.insert(
                    "total_liabilities".into(),
                    (assets * rng.random_range(0.1..0.9)).round(),
                );
            }
            if rng.random::<f64>() >= missing {
                raw.total_equity = Some((rng.random_range(20.0..500.0) * 1e6f64).round());
                raw.cashflow.insert(
                    "capital_expenditure".into(),
                    -(rng.random_range(1.0..20.0) * 1e6f64).round(),
                );
            }
            let employees = (rng.random::<f64>() >= missing).then(|| {
                (50.0 * (1.0 + portfolio as f64) * rng.random_range(1.0..3.0)).round() as u64
            });
            let shareholders =
                (rng.random::<f64>() >= 2.0 * missing).then(|| rng.random_range(100..5000u64));
            table.insert(Fundamentals::from_raw(
                co.ticker.clone(),
                year,
                portfolio,
                ipo,
                employees,
                shareholders,
                Some(shares),
                raw,
            )?)?;
        }
    }
    Ok(table)
}

/// Node-classification task whose labels depend on earlier neighbours' features only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTaskConfig {
    pub n_events: usize,
    pub n_companies: usize,
    pub n_codes: usize,
    pub years: usize,
    pub n_noise: usize,
    /// Probability that a label follows the neighbour rule rather than being uniform.
    pub signal: f64,
    pub seed: u64,
}

impl GraphTaskConfig {
    pub fn new(seed: u64) -> Self {
        GraphTaskConfig {
            n_events: 2000,
            n_companies: 40,
            n_codes: 60,
            years: 6,
            n_noise: 4,
            signal: 0.9,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphTask {
    pub announcements: Vec<Announcement>,
    pub graph: EventGraph,
    /// Rows in graph node order.
    pub features: FeatureMatrix,
    pub labels: Vec<PriceClass>,
}

/// Each event carries a visible `score`; its label is the sextile of the mean score of
/// its in-neighbours (earlier events of the same company or code). Own features carry
/// no information about the own label.
pub fn synth_graph_task(config: &GraphTaskConfig) -> Result<GraphTask, SynthError> {
    if config.n_events < 6 * N_CLASSES
        || config.n_companies == 0
        || config.n_codes == 0
        || config.years == 0
    {
        return Err(SynthError::InvalidConfig(
            "graph task needs positive sizes and at least 36 events".into(),
        ));
    }
    if config.n_codes > 26 * 99 || !(0.0..=1.0).contains(&config.signal) {
        return Err(SynthError::InvalidConfig(
            "n_codes too large or signal outside [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid");
    let span = (config.years * 365) as u64;
    let mut drafts: Vec<(u64, usize, usize)> = (0..config.n_events)
        .map(|_| {
            (
                rng.random_range(0..span),
                rng.random_range(0..config.n_companies),
                rng.random_range(0..config.n_codes),
            )
        })
        .collect();
    drafts.sort_unstable();
    let announcements: Vec<Announcement> = drafts
        .iter()
        .enumerate()
        .map(|(i, &(day, co, code))| {
            let code = format!("{}{:02}", (b'A' + (code / 99) as u8) as char, code % 99 + 1);
            Announcement {
                id: format!("G{i:05}"),
                ticker: ticker_name(co),
                date: start + Days::new(day),
                text: String::new(),
                icd10: vec![Icd10::new(&code).expect("valid code")],
                phase: None,
                polarity: None,
            }
        })
        .collect();
    let graph = build_event_graph(&announcements, DEFAULT_MAX_GAP_DAYS);
    debug_assert!(graph
        .nodes()
        .iter()
        .zip(&announcements)
        .all(|(n, a)| n.id == a.id));

    let n = config.n_events;
    let score: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut schema = vec!["score".to_string()];
    schema.extend((0..config.n_noise).map(|k| format!("noise_{k}")));
    schema.push("sparse".into());
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            let mut r = vec![Some(score[i])];
            r.extend((0..config.n_noise).map(|_| Some(StandardNormal.sample(&mut rng))));
            r.push((rng.random::<f64>() >= 0.3).then(|| rng.random_range(0.0..1.0)));
            r
        })
        .collect();
    let features = FeatureMatrix::from_rows(schema, &rows)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;

    let latent: Vec<f64> = (0..n)
        .map(|i| {
            let nb = graph.in_neighbors(i);
            if nb.is_empty() {
                rng.random_range(-1.0..1.0)
            } else {
                nb.iter().map(|&j| score[j]).sum::<f64>() / nb.len() as f64
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));
    let mut labels = vec![PriceClass::ALL[0]; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = PriceClass::ALL[rank * N_CLASSES / n];
    }
    for l in labels.iter_mut() {
        if rng.random::<f64>() >= config.signal {
            *l = PriceClass::ALL[rng.random_range(0..N_CLASSES)];
        }
    }
    Ok(GraphTask {
        announcements,
        graph,
        features,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::event_day_index;
    use crate::forecast::{EventWindow, MarketModelForecaster};
    use crate::impact::{event_impact, mann_whitney_u, non_announcement_sample};
    use crate::sentiment::{label_rule_based, KeywordDictionaries};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_companies: 10,
            years: 4,
            n_events: 40,
            ..SynthConfig::new(seed)
        }
    }

    #[test]
    fn byte_identical_per_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synth_generate(&small(9))
            .unwrap()
            .write_dir(a.path())
            .unwrap();
        synth_generate(&small(9))
            .unwrap()
            .write_dir(b.path())
            .unwrap();
        for rel in [
            "announcements.jsonl",
            "index.csv",
            "fundamentals.csv",
            "truth.json",
            "prices/PHAA.csv",
        ] {
            assert_eq!(
                std::fs::read(a.path().join(rel)).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
        assert_ne!(
            synth_generate(&small(10)).unwrap().truth,
            synth_generate(&small(9)).unwrap().truth
        );
    }

    #[test]
    fn written_dataset_loads_back() {
        let d = tempfile::tempdir().unwrap();
        let s = synth_generate(&small(2)).unwrap();
        s.write_dir(d.path()).unwrap();
        assert_eq!(Dataset::load_dir(d.path()).unwrap(), s.dataset);
    }

    #[test]
    fn event_days_follow_announcement_dates() {
        let s = synth_generate(&small(3)).unwrap();
        let cal = s.dataset.calendar();
        let mut weekend = 0;
        for (a, t) in s.dataset.announcements.iter().zip(&s.truth.events) {
            assert_eq!(event_day_index(&cal, a.date), Some(t.event_day));
            weekend += usize::from(matches!(a.date.weekday(), Weekday::Sat | Weekday::Sun));
        }
        assert!(weekend > 0);
    }

    #[test]
    fn texts_carry_keywords_of_their_polarity() {
        let cfg = SynthConfig {
            novel_keyword_rate: 0.0,
            ..small(4)
        };
        let s = synth_generate(&cfg).unwrap();
        let dicts = KeywordDictionaries::initial();
        for (a, t) in s.dataset.announcements.iter().zip(&s.truth.events) {
            assert_eq!(
                label_rule_based(&a.text, &dicts).unwrap(),
                t.polarity,
                "{}",
                a.text
            );
        }
        let novel = synth_generate(&SynthConfig {
            novel_keyword_rate: 1.0,
            ..small(4)
        })
        .unwrap();
        let updated = KeywordDictionaries::updated();
        for (a, t) in novel.dataset.announcements.iter().zip(&novel.truth.events) {
            assert_eq!(
                label_rule_based(&a.text, &dicts).unwrap(),
                Polarity::Neutral,
                "{}",
                a.text
            );
            assert_eq!(
                label_rule_based(&a.text, &updated).unwrap(),
                t.polarity,
                "{}",
                a.text
            );
        }
    }

    #[test]
    fn fundamentals_have_missing_cells() {
        let s = synth_generate(&small(5)).unwrap();
        let f = &s.dataset.fundamentals;
        assert_eq!(f.len(), 10 * 6);
        assert!(f.iter().any(|r| r.employees.is_none()));
        assert!(f.iter().any(|r| r.balance_items.is_empty()));
        assert!(f.iter().any(|r| !r.income_items.is_empty()));
    }

    #[test]
    fn too_many_events_rejected() {
        let cfg = SynthConfig {
            n_events: 10_000,
            ..small(1)
        };
        assert!(matches!(
            synth_generate(&cfg),
            Err(SynthError::InvalidConfig(_))
        ));
        let cfg = SynthConfig {
            polarity_mix: [0.5, 0.5, 0.5],
            ..small(1)
        };
        assert!(matches!(
            synth_generate(&cfg),
            Err(SynthError::InvalidConfig(_))
        ));
    }

    fn measured(s: &SynthDataset, horizon: usize) -> (Vec<(Polarity, f64)>, Vec<f64>) {
        let index = s.dataset.index.as_ref().unwrap().close();
        let windows: Vec<EventWindow> = s
            .truth
            .events
            .iter()
            .map(|t| EventWindow {
                id: &t.id,
                stock: s.dataset.prices[&t.ticker].close(),
                index: Some(index),
                event_day: t.event_day,
            })
            .collect();
        let f = MarketModelForecaster::default();
        let ev = windows
            .iter()
            .zip(&s.truth.events)
            .map(|(w, t)| (t.polarity, event_impact(&f, w, horizon).unwrap().ncar))
            .collect();
        (ev, non_announcement_sample(&f, &windows, horizon).ncars())
    }

    #[test]
    fn planted_peaks_detected_exactly() {
        let m = MarketConfig::default();
        for seed in 0..8 {
            let ds = synth_generate(&SynthConfig::new(seed)).unwrap();
            let mut found: Vec<usize> = ds
                .dataset
                .prices
                .values()
                .flat_map(|s| {
                    crate::market::detect_volume_peaks(s, m.peak_k, m.baseline_window).unwrap()
                })
                .map(|p| p.duration)
                .collect();
            let mut planted = ds.truth.peak_durations.clone();
            found.sort_unstable();
            planted.sort_unstable();
            assert_eq!(found, planted, "seed {seed}");
        }
    }

    #[test]
    fn zero_effect_mean_ncar_near_zero() {
        let zero = EffectSpec {
            mean: 0.0,
            std: 0.0,
        };
        let cfg = SynthConfig {
            n_companies: 60,
            years: 8,
            n_events: 500,
            positive: zero,
            negative: zero,
            neutral: zero,
            ..SynthConfig::new(11)
        };
        let s = synth_generate(&cfg).unwrap();
        let (ev, _) = measured(&s, 20);
        let v: Vec<f64> = ev.iter().map(|e| e.1).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            mean.abs() < 3.0 * sd / n.sqrt(),
            "mean {mean} se {}",
            sd / n.sqrt()
        );
    }

    #[test]
    fn planted_negative_effect_detected() {
        let s = synth_generate(&SynthConfig::new(12)).unwrap();
        let (ev, non) = measured(&s, 20);
        let neg: Vec<f64> = ev
            .iter()
            .filter(|e| e.0 == Polarity::Negative)
            .map(|e| e.1)
            .collect();
        let mean = neg.iter().sum::<f64>() / neg.len() as f64;
        assert!((mean + 0.2).abs() < 0.05, "{mean}");
        assert!(mann_whitney_u(&neg, &non).unwrap().p_value < 0.05);
    }

    #[test]
    fn graph_task_labels_ignore_own_features() {
        let t = synth_graph_task(&GraphTaskConfig {
            n_events: 600,
            ..GraphTaskConfig::new(1)
        })
        .unwrap();
        assert_eq!(t.features.n_rows(), 600);
        assert_eq!(t.labels.len(), 600);
        let mut counts = [0usize; N_CLASSES];
        t.labels.iter().for_each(|l| counts[l.index()] += 1);
        assert!(counts.iter().all(|&c| c >= 60), "{counts:?}");
        assert!(t.graph.edges().len() > 600);
    }
}
