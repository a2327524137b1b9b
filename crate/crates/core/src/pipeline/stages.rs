use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{DictionaryChoice, ForecasterChoice, PostWindow, RunConfig};
use super::features::{event_features, EventInputs};
use super::{Outputs, Stage, StageError};
use crate::boost::{
    permutation_importance, train_ensemble, EnsembleConfig, EnsembleModel, FeatureMatrix,
    ForestConfig,
};
use crate::corpus::{
    align_to_calendar, event_day_index, Announcement, Dataset, Polarity, PriceSeries,
};
use crate::evalkit::{
    evaluate_repeats, stratified_splits_with, summarize, AucSummary, CompareConfig, ModelKind,
    RepeatScores,
};
use crate::forecast::{
    actual_path, sliding_backtest, write_forecasts, DriftForecaster, EventWindow, ForecastError,
    Forecaster, ImportedForecasts, MarketModelForecaster, NormalizedPath,
};
use crate::graph::{build_event_graph, EventGraph};
use crate::impact::{
    equal_group_analysis, ks_normality, mann_whitney_u, mismatch_matrix, moments,
    non_announcement_sample, sigma_neutral, ImpactResult, LabeledNcar, PriceClass,
};
use crate::market::{
    detect_volume_peaks, duration_histogram, estimate_post_window, MarketError, VolumePeak,
};
use crate::report::{bar_chart_svg, histogram_svg};
use crate::sentiment::{bootstrap_round, BowConfig, KeywordDictionaries, RuleLabeler};

struct Ticker {
    series: PriceSeries,
    index: Option<Vec<f64>>,
}

struct Event {
    ann: Announcement,
    event_day: usize,
}

struct Skip {
    id: String,
    stage: Stage,
    reason: String,
}

/// Data handed from one stage to the next.
#[derive(Default)]
pub(crate) struct State {
    dataset: Dataset,
    tickers: BTreeMap<String, Ticker>,
    events: Vec<Event>,
    skipped: Vec<Skip>,
    horizon: usize,
    expected: Vec<NormalizedPath>,
    impacts: Vec<ImpactResult>,
    graph: Option<EventGraph>,
    features: Option<FeatureMatrix>,
    labels: Vec<PriceClass>,
    model: Option<EnsembleModel>,
}

impl State {
    fn skip(&mut self, id: &str, stage: Stage, reason: impl ToString) {
        self.skipped.push(Skip {
            id: id.to_string(),
            stage,
            reason: reason.to_string(),
        });
    }

    pub(crate) fn skipped_csv(&self) -> Result<Vec<u8>, StageError> {
        csv_bytes(
            &["event_id", "stage", "reason"],
            self.skipped
                .iter()
                .map(|s| vec![s.id.clone(), s.stage.to_string(), s.reason.clone()]),
        )
    }

    fn windows(&self) -> Vec<EventWindow<'_>> {
        self.events
            .iter()
            .map(|e| {
                let t = &self.tickers[&e.ann.ticker];
                EventWindow {
                    id: &e.ann.id,
                    stock: t.series.close(),
                    index: t.index.as_deref(),
                    event_day: e.event_day,
                }
            })
            .collect()
    }

    fn require<T>(v: Option<T>, what: &str) -> Result<T, StageError> {
        v.ok_or_else(|| {
            StageError::Invalid(format!(
                "{what} is not available; run the earlier stages first"
            ))
        })
    }
}

type Summary = BTreeMap<String, Value>;

fn csv_bytes<I>(header: &[&str], rows: I) -> Result<Vec<u8>, StageError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| StageError::Invalid(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, StageError> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn run_stage(
    stage: Stage,
    c: &RunConfig,
    s: &mut State,
    out: &mut Outputs<'_>,
) -> Result<Summary, StageError> {
    match stage {
        Stage::Ingest => ingest(c, s, out),
        Stage::Label => label(c, s, out),
        Stage::Windows => windows(c, s, out),
        Stage::Forecast => forecast(c, s, out),
        Stage::Ncar => ncar(c, s, out),
        Stage::Graph => graph(c, s, out),
        Stage::Train => train(c, s, out),
        Stage::Evaluate => evaluate(c, s, out),
        Stage::Explain => explain(c, s, out),
    }
}

fn summary<const N: usize>(pairs: [(&str, Value); N]) -> Summary {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn ingest(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let mut ds = Dataset::load_dir(&c.data_dir)?;
    let calendar = ds.calendar();
    for (ticker, series) in &ds.prices {
        let first = series.dates()[0];
        let offset = calendar.partition_point(|d| *d < first);
        if offset == calendar.len() {
            continue;
        }
        let aligned = align_to_calendar(series, &calendar[offset..])?;
        let index = ds.index.as_ref().map(|ix| ix.close()[offset..].to_vec());
        s.tickers.insert(
            ticker.clone(),
            Ticker {
                series: aligned,
                index,
            },
        );
    }
    let n_announcements = ds.announcements.len();
    for ann in std::mem::take(&mut ds.announcements) {
        let Some(t) = s.tickers.get(&ann.ticker) else {
            s.skip(&ann.id, Stage::Ingest, "no price series for ticker");
            continue;
        };
        match event_day_index(t.series.dates(), ann.date) {
            Some(day) => s.events.push(Event {
                ann,
                event_day: day,
            }),
            None => s.skip(
                &ann.id,
                Stage::Ingest,
                "announced after the end of the price history",
            ),
        }
    }
    s.events
        .sort_by(|a, b| (a.ann.date, &a.ann.id).cmp(&(b.ann.date, &b.ann.id)));
    let rows = s.events.iter().map(|e| {
        let t = &s.tickers[&e.ann.ticker];
        vec![
            e.ann.id.clone(),
            e.ann.ticker.clone(),
            e.ann.date.to_string(),
            t.series.dates()[e.event_day].to_string(),
            e.event_day.to_string(),
        ]
    });
    out.write(
        "events.csv",
        &csv_bytes(
            &["event_id", "ticker", "date", "event_date", "event_day"],
            rows,
        )?,
    )?;
    let sm = summary([
        ("announcements", json!(n_announcements)),
        ("events", json!(s.events.len())),
        ("tickers", json!(s.tickers.len())),
        ("index", json!(ds.index.is_some())),
    ]);
    s.dataset = ds;
    Ok(sm)
}

fn label(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let dicts = match &c.dictionaries {
        DictionaryChoice::Initial => KeywordDictionaries::initial(),
        DictionaryChoice::Updated => KeywordDictionaries::updated(),
        DictionaryChoice::File(p) => KeywordDictionaries::load(p)?,
    };
    let labeler = RuleLabeler::new(&dicts);
    let mut sources = Vec::new();
    let mut kept = Vec::with_capacity(s.events.len());
    for mut e in std::mem::take(&mut s.events) {
        if e.ann.polarity.is_some() {
            sources.push("given");
        } else {
            match labeler.label(&e.ann.text) {
                Ok(p) => {
                    e.ann.polarity = Some(p);
                    sources.push("rule");
                }
                Err(err) => {
                    s.skip(&e.ann.id, Stage::Label, err);
                    continue;
                }
            }
        }
        kept.push(e);
    }
    s.events = kept;

    let mut sm = Summary::new();
    let mut model_labels = BTreeMap::new();
    if c.bootstrap {
        let docs: Vec<(String, String)> = s
            .events
            .iter()
            .map(|e| (e.ann.id.clone(), e.ann.text.clone()))
            .collect();
        let round = bootstrap_round(
            &docs,
            &dicts,
            &BowConfig {
                seed: c.seed,
                ..BowConfig::default()
            },
            c.keyword_suggestions,
        )?;
        out.write("divergence.json", &json_bytes(&round.report)?)?;
        let rows = round.suggestions.iter().map(|k| {
            vec![
                k.phrase.clone(),
                k.polarity.to_string(),
                k.score.to_string(),
                k.doc_count.to_string(),
            ]
        });
        out.write(
            "keyword_suggestions.csv",
            &csv_bytes(&["phrase", "polarity", "score", "doc_count"], rows)?,
        )?;
        sm.insert("divergences".into(), json!(round.report.n_divergences));
        model_labels = round.model_labels;
    }
    let rows = s.events.iter().zip(&sources).map(|(e, src)| {
        vec![
            e.ann.id.clone(),
            e.ann.polarity.map(|p| p.to_string()).unwrap_or_default(),
            src.to_string(),
            model_labels
                .get(&e.ann.id)
                .map(|p| p.to_string())
                .unwrap_or_default(),
        ]
    });
    out.write(
        "labels.csv",
        &csv_bytes(&["event_id", "polarity", "source", "model_polarity"], rows)?,
    )?;
    for p in Polarity::ALL {
        sm.insert(
            p.to_string(),
            json!(s
                .events
                .iter()
                .filter(|e| e.ann.polarity == Some(p))
                .count()),
        );
    }
    Ok(sm)
}

fn windows(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let mut peaks: Vec<(&str, VolumePeak)> = Vec::new();
    let mut short = 0;
    for (ticker, t) in &s.tickers {
        match detect_volume_peaks(&t.series, c.market.peak_k, c.market.baseline_window) {
            Ok(p) => peaks.extend(p.into_iter().map(|p| (ticker.as_str(), p))),
            Err(MarketError::SeriesTooShort { .. }) => short += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let all: Vec<VolumePeak> = peaks.iter().map(|(_, p)| *p).collect();
    let estimated = match estimate_post_window(&all, c.window_quantile) {
        Ok(t) => Some(t),
        Err(MarketError::NoPeaks) => None,
        Err(e) => return Err(e.into()),
    };
    s.horizon = match c.post_window {
        PostWindow::Fixed(t) => t,
        PostWindow::Auto => estimated.ok_or(MarketError::NoPeaks)?,
    };
    let rows = peaks.iter().map(|(t, p)| {
        vec![
            t.to_string(),
            p.start_date.to_string(),
            p.end_date.to_string(),
            p.duration.to_string(),
        ]
    });
    out.write(
        "volume_peaks.csv",
        &csv_bytes(&["ticker", "start_date", "end_date", "duration"], rows)?,
    )?;
    let info = json!({
        "estimated_window": estimated,
        "quantile": c.window_quantile,
        "used_window": s.horizon,
        "peaks": all.len(),
        "duration_histogram": duration_histogram(&all),
    });
    out.write("window.json", &json_bytes(&info)?)?;
    Ok(summary([
        ("estimated_window", json!(estimated)),
        ("used_window", json!(s.horizon)),
        ("peaks", json!(all.len())),
        ("tickers_too_short", json!(short)),
    ]))
}

fn make_forecaster(c: &RunConfig, has_index: bool) -> Result<Box<dyn Forecaster>, StageError> {
    Ok(match c.forecaster {
        ForecasterChoice::Market => {
            if !has_index {
                return Err(ForecastError::DegenerateIndex(
                    "no index series supplied for the market model".into(),
                )
                .into());
            }
            Box::new(MarketModelForecaster {
                window: c.estimation_window,
            })
        }
        ForecasterChoice::Drift => Box::new(DriftForecaster {
            window: c.estimation_window,
        }),
        ForecasterChoice::Import => {
            let path = c
                .forecast_file
                .as_ref()
                .ok_or_else(|| StageError::Invalid("forecast_file is not set".into()))?;
            Box::new(ImportedForecasts::load(path)?)
        }
    })
}

fn forecast(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let f = make_forecaster(c, s.dataset.index.is_some())?;
    let horizon = s.horizon;
    let (results, backtest) = {
        let windows = s.windows();
        let results: Vec<Result<NormalizedPath, ForecastError>> =
            windows.par_iter().map(|w| f.forecast(w, horizon)).collect();
        (results, sliding_backtest(f.as_ref(), &windows, horizon))
    };
    let mut kept = Vec::new();
    for (e, r) in std::mem::take(&mut s.events).into_iter().zip(results) {
        match r {
            Ok(p) => {
                s.expected.push(p);
                kept.push(e);
            }
            Err(err) => s.skip(&e.ann.id, Stage::Forecast, err),
        }
    }
    s.events = kept;
    write_forecasts(
        out.path("forecasts.csv"),
        s.events.iter().map(|e| e.ann.id.as_str()).zip(&s.expected),
    )?;
    out.record("forecasts.csv")?;
    let rows = backtest
        .per_event
        .iter()
        .map(|(id, m)| vec![id.clone(), m.to_string()]);
    out.write("backtest.csv", &csv_bytes(&["event_id", "mape"], rows)?)?;
    Ok(summary([
        ("forecaster", json!(f.name())),
        ("forecasts", json!(s.events.len())),
        ("backtest_mean_mape", json!(backtest.mean_mape)),
        ("backtest_scored", json!(backtest.per_event.len())),
        ("backtest_skipped", json!(backtest.skipped.len())),
    ]))
}

fn result_value<T: Serialize, E: std::fmt::Display>(r: Result<T, E>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Histogram of NCAR per announcement polarity plus the non-announcement sample.
pub(crate) fn ncar_histogram(
    events: &[(Option<Polarity>, f64)],
    non_announcement: &[f64],
    horizon: usize,
) -> String {
    let groups: Vec<(String, Vec<f64>)> = Polarity::ALL
        .iter()
        .map(|p| {
            (
                p.to_string(),
                events
                    .iter()
                    .filter(|e| e.0 == Some(*p))
                    .map(|e| e.1)
                    .collect(),
            )
        })
        .chain(std::iter::once((
            "non-announcement".to_string(),
            non_announcement.to_vec(),
        )))
        .collect();
    let series: Vec<(&str, &[f64])> = groups
        .iter()
        .map(|(n, v)| (n.as_str(), v.as_slice()))
        .collect();
    histogram_svg(&format!("NCAR over {horizon} trading days"), &series, 30)
}

fn ncar(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let horizon = s.horizon;
    let f = make_forecaster(c, s.dataset.index.is_some())?;
    let mut kept = Vec::new();
    let expected = std::mem::take(&mut s.expected);
    for (e, exp) in std::mem::take(&mut s.events).into_iter().zip(expected) {
        let close = s.tickers[&e.ann.ticker].series.close();
        let r = actual_path(close, e.event_day, horizon)
            .map_err(crate::impact::ImpactError::from)
            .and_then(|a| ImpactResult::new(e.ann.id.clone(), a, exp, horizon));
        match r {
            Ok(imp) => {
                s.impacts.push(imp);
                kept.push(e);
            }
            Err(err) => s.skip(&e.ann.id, Stage::Ncar, err),
        }
    }
    s.events = kept;
    let non = {
        let windows = s.windows();
        non_announcement_sample(f.as_ref(), &windows, horizon)
    };

    let rows = s.events.iter().zip(&s.impacts).map(|(e, r)| {
        vec![
            e.ann.id.clone(),
            e.ann.ticker.clone(),
            e.ann.date.to_string(),
            e.ann.polarity.map(|p| p.to_string()).unwrap_or_default(),
            r.ncar.to_string(),
            r.price_class.to_string(),
        ]
    });
    out.write(
        "ncar.csv",
        &csv_bytes(
            &[
                "event_id",
                "ticker",
                "date",
                "polarity",
                "ncar",
                "price_class",
            ],
            rows,
        )?,
    )?;
    let rows = non
        .values
        .iter()
        .map(|(id, v)| vec![id.clone(), v.to_string()]);
    out.write(
        "non_announcement.csv",
        &csv_bytes(&["event_id", "ncar"], rows)?,
    )?;

    let stats = statistics(c, s, &non.ncars());
    out.write("stats.json", &json_bytes(&stats)?)?;
    let pairs: Vec<(Option<Polarity>, f64)> = s
        .events
        .iter()
        .zip(&s.impacts)
        .map(|(e, r)| (e.ann.polarity, r.ncar))
        .collect();
    out.write(
        "ncar_hist.svg",
        ncar_histogram(&pairs, &non.ncars(), horizon).as_bytes(),
    )?;

    let mut sm = summary([
        ("events", json!(s.impacts.len())),
        ("non_announcement", json!(non.values.len())),
    ]);
    for class in PriceClass::ALL {
        sm.insert(
            class.to_string(),
            json!(s.impacts.iter().filter(|r| r.price_class == class).count()),
        );
    }
    Ok(sm)
}

fn statistics(c: &RunConfig, s: &State, non: &[f64]) -> Value {
    let group = |p: Polarity| -> Vec<f64> {
        s.events
            .iter()
            .zip(&s.impacts)
            .filter(|(e, _)| e.ann.polarity == Some(p))
            .map(|(_, r)| r.ncar)
            .collect()
    };
    let pos = group(Polarity::Positive);
    let neg = group(Polarity::Negative);
    let neu = group(Polarity::Neutral);
    let samples = [
        ("positive", &pos),
        ("negative", &neg),
        ("neutral", &neu),
        ("non_announcement", &non.to_vec()),
    ];
    let mut moment_map = serde_json::Map::new();
    let mut ks_map = serde_json::Map::new();
    for (name, v) in samples {
        moment_map.insert(name.into(), result_value(moments(v)));
        ks_map.insert(name.into(), result_value(ks_normality(v)));
    }
    let tests = json!({
        "negative_vs_non_announcement": result_value(mann_whitney_u(&neg, non)),
        "positive_vs_non_announcement": result_value(mann_whitney_u(&pos, non)),
        "neutral_vs_non_announcement": result_value(mann_whitney_u(&neu, non)),
        "positive_vs_negative": result_value(mann_whitney_u(&pos, &neg)),
    });
    let mismatch = match sigma_neutral(&neu) {
        Ok(sigma) => {
            let labeled: Vec<LabeledNcar<'_>> = s
                .events
                .iter()
                .zip(&s.impacts)
                .map(|(e, r)| LabeledNcar {
                    event_id: &e.ann.id,
                    polarity: e.ann.polarity,
                    ncar: r.ncar,
                })
                .collect();
            match mismatch_matrix(&labeled, sigma) {
                Ok(m) => {
                    json!({ "sigma_neutral": sigma, "order": ["positive", "negative", "neutral"], "counts": m.counts, "rates": m.rates() })
                }
                Err(e) => json!({ "error": e.to_string() }),
            }
        }
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mut groups = serde_json::Map::new();
    for p in [Polarity::Negative, Polarity::Positive] {
        let mut by_cov = serde_json::Map::new();
        for cov in ["portfolio_size", "company_age_years"] {
            let (mut values, mut covariate) = (Vec::new(), Vec::new());
            for (e, r) in s
                .events
                .iter()
                .zip(&s.impacts)
                .filter(|(e, _)| e.ann.polarity == Some(p))
            {
                if let Some(f) = s
                    .dataset
                    .fundamentals
                    .latest_before(&e.ann.ticker, e.ann.date)
                {
                    values.push(r.ncar);
                    covariate.push(if cov == "portfolio_size" {
                        f64::from(f.portfolio_size)
                    } else {
                        f.age_years(e.ann.date)
                    });
                }
            }
            by_cov.insert(
                cov.into(),
                result_value(equal_group_analysis(&values, &covariate, c.groups)),
            );
        }
        groups.insert(p.to_string(), Value::Object(by_cov));
    }
    json!({
        "horizon": s.horizon,
        "moments": moment_map,
        "ks_normality": ks_map,
        "mann_whitney": tests,
        "mismatch": mismatch,
        "equal_groups": groups,
    })
}

fn graph(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let anns: Vec<Announcement> = s.events.iter().map(|e| e.ann.clone()).collect();
    let g = build_event_graph(&anns, c.max_gap_days);
    if g.nodes()
        .iter()
        .zip(&s.events)
        .any(|(n, e)| n.id != e.ann.id)
    {
        return Err(StageError::Invalid(
            "graph node order differs from event order".into(),
        ));
    }
    let inputs: Vec<EventInputs<'_>> = s
        .events
        .iter()
        .map(|e| {
            let t = &s.tickers[&e.ann.ticker];
            EventInputs {
                announcement: &e.ann,
                series: &t.series,
                index_close: t.index.as_deref(),
                event_day: e.event_day,
            }
        })
        .collect();
    let x = event_features(&inputs, &s.dataset.fundamentals, &c.market)?;
    g.write_edges_csv(out.path("edges.csv"))?;
    out.record("edges.csv")?;
    let mut header = vec!["event_id"];
    header.extend(x.schema().iter().map(String::as_str));
    let rows = (0..x.n_rows()).map(|i| {
        let mut r = vec![s.events[i].ann.id.clone()];
        r.extend((0..x.n_cols()).map(|j| opt(x.get(i, j))));
        r
    });
    out.write("features.csv", &csv_bytes(&header, rows)?)?;
    s.labels = s.impacts.iter().map(|r| r.price_class).collect();
    let sm = summary([
        ("nodes", json!(g.len())),
        ("edges", json!(g.edges().len())),
        ("features", json!(x.n_cols())),
    ]);
    s.graph = Some(g);
    s.features = Some(x);
    Ok(sm)
}

fn ensemble_config(c: &RunConfig) -> EnsembleConfig {
    EnsembleConfig {
        gcn: c.gcn,
        gbdt: c.gbdt,
    }
}

fn train(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let g = State::require(s.graph.as_ref(), "event graph")?;
    let x = State::require(s.features.as_ref(), "feature matrix")?;
    let mask = vec![true; s.labels.len()];
    let model = train_ensemble(g, x, &s.labels, &mask, &ensemble_config(c))?;
    out.write("model.json", &json_bytes(&model)?)?;
    let sm = summary([
        ("gcn_best_epoch", json!(model.gcn.history.best_epoch)),
        ("gbdt_rounds", json!(model.gbdt.n_rounds())),
        ("schema_width", json!(model.schema().len())),
    ]);
    s.model = Some(model);
    Ok(sm)
}

/// `model,class,range,auc_mean,auc_std,folds` rows, with a `weighted` row per model.
pub(crate) fn evaluation_rows(summaries: &[AucSummary]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in summaries {
        for c in PriceClass::ALL {
            let k = c.index();
            rows.push(vec![
                s.model.as_str().to_string(),
                c.to_string(),
                c.range(),
                opt(s.per_class_mean[k]),
                opt(s.per_class_std[k]),
                s.per_class_folds[k].to_string(),
            ]);
        }
        rows.push(vec![
            s.model.as_str().to_string(),
            "weighted".into(),
            String::new(),
            opt(s.weighted_mean),
            opt(s.weighted_std),
            String::new(),
        ]);
    }
    rows
}

pub(crate) const EVALUATION_HEADER: [&str; 6] =
    ["model", "class", "range", "auc_mean", "auc_std", "folds"];

fn auc_chart(rows: &[Vec<String>]) -> String {
    let labels: Vec<String> = rows.iter().map(|r| format!("{} {}", r[0], r[1])).collect();
    let value = |s: &str| s.parse::<f64>().ok();
    let means: Vec<Option<f64>> = rows.iter().map(|r| value(&r[3])).collect();
    let stds: Vec<Option<f64>> = rows.iter().map(|r| value(&r[4])).collect();
    bar_chart_svg(
        "OvR ROC AUC (mean, std over repeats)",
        &labels,
        &means,
        Some(&stds),
    )
}

fn evaluate(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let g = State::require(s.graph.as_ref(), "event graph")?;
    let x = State::require(s.features.as_ref(), "feature matrix")?;
    let plan = stratified_splits_with(&s.labels, c.seed, c.repeats, c.train_fraction)?;
    let cfg = CompareConfig {
        ensemble: ensemble_config(c),
        forest: ForestConfig {
            n_trees: c.forest_trees,
            seed: c.seed,
            ..ForestConfig::default()
        },
    };
    let repeats: Vec<RepeatScores> = evaluate_repeats(g, x, &s.labels, &plan, &cfg)?;
    let summaries: Vec<AucSummary> = ModelKind::ALL
        .iter()
        .map(|k| summarize(*k, &repeats))
        .collect();
    let rows = evaluation_rows(&summaries);
    out.write(
        "evaluation.csv",
        &csv_bytes(&EVALUATION_HEADER, rows.clone())?,
    )?;
    let per_repeat = repeats.iter().flat_map(|r| {
        r.reports.iter().map(move |(k, a)| {
            vec![
                r.repeat.to_string(),
                k.as_str().to_string(),
                opt(a.weighted),
            ]
        })
    });
    out.write(
        "evaluation_repeats.csv",
        &csv_bytes(&["repeat", "model", "weighted_auc"], per_repeat)?,
    )?;
    let weighted: Vec<Vec<String>> = rows.into_iter().filter(|r| r[1] == "weighted").collect();
    out.write("auc.svg", auc_chart(&weighted).as_bytes())?;
    let mut sm = Summary::new();
    for s in &summaries {
        sm.insert(
            format!("{}_weighted_auc", s.model.as_str()),
            json!(s.weighted_mean),
        );
    }
    sm.insert("repeats".into(), json!(repeats.len()));
    Ok(sm)
}

fn importance_chart(rows: &[(String, f64, f64)]) -> String {
    let top: Vec<&(String, f64, f64)> = rows.iter().take(20).collect();
    let labels: Vec<String> = top.iter().map(|r| r.0.clone()).collect();
    let values: Vec<Option<f64>> = top.iter().map(|r| Some(r.1)).collect();
    let errors: Vec<Option<f64>> = top.iter().map(|r| Some(r.2)).collect();
    bar_chart_svg(
        "Permutation importance (weighted AUC drop)",
        &labels,
        &values,
        Some(&errors),
    )
}

fn explain(c: &RunConfig, s: &mut State, out: &mut Outputs<'_>) -> Result<Summary, StageError> {
    let g = State::require(s.graph.as_ref(), "event graph")?;
    let x = State::require(s.features.as_ref(), "feature matrix")?;
    let model = State::require(s.model.as_ref(), "trained model")?;
    let augmented = model.augment(g, x)?;
    let imp = permutation_importance(
        &model.gbdt,
        &augmented,
        &s.labels,
        c.importance_repeats,
        c.seed,
    )?;
    let rows: Vec<(String, f64, f64)> = imp
        .iter()
        .map(|i| (i.feature.clone(), i.importance, i.std))
        .collect();
    let csv_rows = rows
        .iter()
        .map(|r| vec![r.0.clone(), r.1.to_string(), r.2.to_string()]);
    out.write(
        "importance.csv",
        &csv_bytes(&["feature", "importance", "std"], csv_rows)?,
    )?;
    out.write("importance.svg", importance_chart(&rows).as_bytes())?;
    Ok(summary([(
        "top_feature",
        json!(imp.first().map(|i| i.feature.clone())),
    )]))
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_rows(path: &Path) -> Result<Option<Table>, StageError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()?;
    Ok(Some((header, rows)))
}

fn column(header: &[String], name: &str) -> Result<usize, StageError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| StageError::Invalid(format!("missing column '{name}'")))
}

/// Re-renders the charts of an existing output directory and adds the
/// announcements-per-year table. Returns the files written.
pub fn render_reports(out_dir: impl AsRef<Path>) -> Result<Vec<String>, StageError> {
    let dir = out_dir.as_ref();
    let mut written = Vec::new();
    let mut write = |name: &str, bytes: &[u8]| -> Result<(), StageError> {
        std::fs::write(dir.join(name), bytes)?;
        written.push(name.to_string());
        Ok(())
    };
    if let Some((h, rows)) = read_rows(&dir.join("ncar.csv"))? {
        let (p, v) = (column(&h, "polarity")?, column(&h, "ncar")?);
        let events: Vec<(Option<Polarity>, f64)> = rows
            .iter()
            .filter_map(|r| Some((r[p].parse().ok(), r[v].parse().ok()?)))
            .collect();
        let non: Vec<f64> = read_rows(&dir.join("non_announcement.csv"))?
            .map(|(h, rows)| {
                let v = column(&h, "ncar").unwrap_or(1);
                rows.iter().filter_map(|r| r.get(v)?.parse().ok()).collect()
            })
            .unwrap_or_default();
        let horizon = std::fs::read_to_string(dir.join("window.json"))
            .ok()
            .and_then(|s| serde_json::from_str::<Value>(&s).ok())
            .and_then(|v| v["used_window"].as_u64())
            .unwrap_or(0) as usize;
        write(
            "ncar_hist.svg",
            ncar_histogram(&events, &non, horizon).as_bytes(),
        )?;
    }
    if let Some((h, rows)) = read_rows(&dir.join("evaluation.csv"))? {
        if h.iter().map(String::as_str).ne(EVALUATION_HEADER) {
            return Err(StageError::Invalid(
                "evaluation.csv has an unexpected header".into(),
            ));
        }
        let weighted: Vec<Vec<String>> = rows.into_iter().filter(|r| r[1] == "weighted").collect();
        write("auc.svg", auc_chart(&weighted).as_bytes())?;
    }
    if let Some((h, rows)) = read_rows(&dir.join("importance.csv"))? {
        let (f, i, sd) = (
            column(&h, "feature")?,
            column(&h, "importance")?,
            column(&h, "std")?,
        );
        let parsed: Vec<(String, f64, f64)> = rows
            .iter()
            .filter_map(|r| Some((r[f].clone(), r[i].parse().ok()?, r[sd].parse().ok()?)))
            .collect();
        write("importance.svg", importance_chart(&parsed).as_bytes())?;
    }
    if let Some((h, rows)) = read_rows(&dir.join("events.csv"))? {
        let d = column(&h, "date")?;
        let mut per_year: BTreeMap<i32, usize> = BTreeMap::new();
        for r in &rows {
            if let Ok(date) = r[d].parse::<NaiveDate>() {
                *per_year.entry(date.year()).or_insert(0) += 1;
            }
        }
        let csv_rows = per_year
            .iter()
            .map(|(y, n)| vec![y.to_string(), n.to_string()]);
        write(
            "announcements_per_year.csv",
            &csv_bytes(&["year", "announcements"], csv_rows)?,
        )?;
        let labels: Vec<String> = per_year.keys().map(|y| y.to_string()).collect();
        let values: Vec<Option<f64>> = per_year.values().map(|n| Some(*n as f64)).collect();
        write(
            "announcements_per_year.svg",
            bar_chart_svg("Announcements per year", &labels, &values, None).as_bytes(),
        )?;
    }
    Ok(written)
}
