use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::thread;

use trialpulse_cli::{fetch_csv, run, CsvKind, FetchError, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("trialpulse").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// Serves one canned HTTP response and returns the URL to fetch it from.
fn serve_once(status: &str, content_type: &str, body: &str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let response = format!(
        "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    thread::spawn(move || {
        if let Ok((mut stream, _)) = listener.accept() {
            let mut buf = [0u8; 4096];
            let _ = stream.read(&mut buf);
            let _ = stream.write_all(response.as_bytes());
        }
    });
    format!("http://{addr}/data.csv")
}

const PRICES: &str = "date,close,volume\n2020-01-02,10.5,1000\n2020-01-03,10.7,1200\n";

#[test]
fn help_and_version_succeed() {
    assert_eq!(call(&["--help"]).0, EXIT_OK);
    assert_eq!(call(&["--version"]).0, EXIT_OK);
    assert_eq!(call(&["ingest", "--help"]).0, EXIT_OK);
}

#[test]
fn bad_usage_is_a_validation_error() {
    assert_eq!(call(&["frobnicate"]).0, EXIT_VALIDATION);
    assert_eq!(call(&["ingest", "--no-such-flag"]).0, EXIT_VALIDATION);
    let (code, _, err) = call(&["ingest", "--data", "/definitely/missing"]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(err.contains("seed"), "{err}");
    let (code, _, err) = call(&["ingest", "--data", "/definitely/missing", "--seed", "1"]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(err.contains("/definitely/missing"), "{err}");
    assert_eq!(
        call(&["ingest", "--seed", "1", "--set", "nonsense"]).0,
        EXIT_VALIDATION
    );
}

#[test]
fn simgen_then_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let d = data.to_str().unwrap();
    let o = out.to_str().unwrap();
    let (code, msg, err) = call(&[
        "simgen", "--seed", "2", "--dir", d, "--events", "120", "--years", "6",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(msg.contains("120 announcements"), "{msg}");
    assert!(data.join("truth.json").exists());

    // The config file sets a short window, --set overrides it and --seed beats both.
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!("# test run\ndata_dir = {d}\nseed = 99\npost_window = 10\n"),
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let (code, msg, err) = call(&[
        "windows",
        "--config",
        cfg,
        "--set",
        "post_window=15",
        "--seed",
        "2",
        "--out",
        o,
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(msg.contains("used_window=15"), "{msg}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 2);
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 3);

    let (code, msg, err) = call(&["stats", "--data", d, "--seed", "2", "--out", o]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(msg.contains("\"mann_whitney\""), "{msg}");

    let (code, msg, _) = call(&["report", "--out", o]);
    assert_eq!(code, EXIT_OK);
    assert!(msg.contains("announcements_per_year.svg"), "{msg}");
}

#[test]
fn runtime_failure_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let d = data.to_str().unwrap();
    assert_eq!(
        call(&["simgen", "--seed", "4", "--dir", d, "--events", "60"]).0,
        EXIT_OK
    );
    std::fs::remove_file(data.join("index.csv")).unwrap();
    let out = tmp.path().join("out");
    let (code, _, err) = call(&[
        "forecast",
        "--data",
        d,
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("forecast stage failed"), "{err}");
}

#[test]
fn fetch_accepts_valid_prices() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("prices/ABC.csv");
    let url = serve_once("200 OK", "text/csv", PRICES);
    let n = fetch_csv(&url, &dest, CsvKind::Prices).unwrap();
    assert_eq!(n as usize, PRICES.len());
    assert_eq!(std::fs::read_to_string(&dest).unwrap(), PRICES);
}

#[test]
fn fetch_rejects_html() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("ABC.csv");
    let url = serve_once(
        "200 OK",
        "text/html",
        "<html><body>Service unavailable</body></html>",
    );
    match fetch_csv(&url, &dest, CsvKind::Prices) {
        Err(FetchError::Schema(_)) => {}
        other => panic!("expected a schema error, got {other:?}"),
    }
    assert!(!dest.exists());
    // An index file has no volume column.
    let url = serve_once("200 OK", "text/csv", "date,close\n2020-01-02,5\n");
    assert!(matches!(
        fetch_csv(&url, &dest, CsvKind::Prices),
        Err(FetchError::Schema(_))
    ));
}

#[test]
fn fetch_reports_unreachable_host() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let dest = Path::new("/nonexistent-dir/never.csv");
    match fetch_csv(
        &format!("http://127.0.0.1:{port}/x.csv"),
        dest,
        CsvKind::Index,
    ) {
        Err(FetchError::Network(_)) => {}
        other => panic!("expected a network error, got {other:?}"),
    }
    assert!(matches!(
        fetch_csv("ftp://example.com/x.csv", dest, CsvKind::Index),
        Err(FetchError::InvalidUrl(_))
    ));
    let (code, _, _) = call(&[
        "fetch",
        &format!("http://127.0.0.1:{port}/x.csv"),
        "/tmp/never.csv",
    ]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn fetch_reports_http_errors() {
    let url = serve_once("404 Not Found", "text/html", "<html>missing</html>");
    let tmp = tempfile::tempdir().unwrap();
    let r = fetch_csv(&url, tmp.path().join("x.csv"), CsvKind::Prices);
    assert!(
        matches!(r, Err(FetchError::Network(ref m)) if m.contains("404")),
        "{r:?}"
    );
}
