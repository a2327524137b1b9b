mod common;

use std::fs;

use trialpulse_core::forecast::ForecastError;
use trialpulse_core::pipeline::{
    render_reports, run_pipeline, run_until, ForecasterChoice, PipelineError, Stage, StageError,
    MANIFEST_FILE,
};

#[test]
fn full_run_writes_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    common::write_synth(&data, &common::pipeline_synth(3));
    let manifest = run_pipeline(&common::quick_run(&data, &out, 3)).unwrap();

    let stages: Vec<Stage> = manifest.stages.iter().map(|s| s.stage).collect();
    assert_eq!(stages, Stage::ALL);
    for rec in &manifest.stages {
        assert!(!rec.outputs.is_empty(), "{} wrote nothing", rec.stage);
        for f in &rec.outputs {
            assert!(out.join(&f.file).exists(), "{} missing", f.file);
        }
    }
    let ncar = fs::read_to_string(out.join("ncar.csv")).unwrap();
    assert!(ncar.starts_with("event_id,ticker,date,polarity,ncar,price_class\n"));
    let eval = fs::read_to_string(out.join("evaluation.csv")).unwrap();
    assert_eq!(eval.lines().count(), 1 + 3 * 7);
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    let p = stats["mann_whitney"]["negative_vs_non_announcement"]["p_value"]
        .as_f64()
        .unwrap();
    assert!(p < 0.05, "planted negative shift not detected: p = {p}");

    let rendered = render_reports(&out).unwrap();
    assert!(rendered.contains(&"announcements_per_year.csv".to_string()));
    assert!(rendered.contains(&"auc.svg".to_string()));
}

#[test]
fn market_model_without_index_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    common::write_synth(&data, &common::pipeline_synth(5));
    fs::remove_file(data.join(trialpulse_core::corpus::INDEX_FILE)).unwrap();

    let config = common::quick_run(&data, &tmp.path().join("out"), 5);
    match run_until(&config, Stage::Forecast) {
        Err(PipelineError::Stage {
            stage: Stage::Forecast,
            source: StageError::Forecast(ForecastError::DegenerateIndex(_)),
        }) => {}
        other => panic!("expected a degenerate-index failure, got {other:?}"),
    }

    let mut drift = config.clone();
    drift.forecaster = ForecasterChoice::Drift;
    let m = run_until(&drift, Stage::Ncar).unwrap();
    assert_eq!(m.stages.len(), 5);
}

#[test]
fn partial_runs_are_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    common::write_synth(&data, &common::pipeline_synth(8));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_until(&common::quick_run(&data, &a, 8), Stage::Graph).unwrap();
    run_until(&common::quick_run(&data, &b, 8), Stage::Graph).unwrap();
    assert_eq!(
        fs::read(a.join(MANIFEST_FILE)).unwrap(),
        fs::read(b.join(MANIFEST_FILE)).unwrap()
    );
    assert_eq!(
        fs::read(a.join("features.csv")).unwrap(),
        fs::read(b.join("features.csv")).unwrap()
    );
}
