use std::collections::BTreeMap;
use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use tlawb_cli::rundir::{check_command, CheckArgs, RunDir, EXPRESSIONS_CACHE, REPORT_FILE};
use tlawb_cli::server::router;
use tlawb_core::engine::CheckOptions;
use tlawb_core::profiler::Metric;

fn run_dir(tmp: &Path, name: &str, profile: bool) -> RunDir {
    let models = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models");
    let out = tmp.join(name);
    check_command(&CheckArgs {
        spec: models.join(format!("{name}.spec")),
        config: models.join(format!("{name}.cfg")),
        out: out.clone(),
        options: CheckOptions { profile, ..Default::default() },
        full_values: false,
    })
    .unwrap();
    RunDir::open(out).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body.to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    call(app, "GET", uri, "").await
}

fn field<'a>(body: &'a str, key: &str) -> Vec<&'a str> {
    body.lines().filter_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": "))).collect()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[tokio::test]
async fn status_report_and_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(tmp.path(), "SimpleBad", false);
    let app = router(dir.clone());
    let (s, body) = get(&app, "/api/status").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(field(&body, "module"), ["SimpleBad"]);
    assert_eq!(field(&body, "has_trace"), ["true"]);
    assert_eq!(field(&body, "has_profile"), ["false"]);

    let (s, body) = get(&app, "/api/report").await;
    assert_eq!((s, body), (StatusCode::OK, dir.read(REPORT_FILE).unwrap()));

    let (s, body) = get(&app, "/api/trace").await;
    assert_eq!(s, StatusCode::OK);
    let trace = dir.trace().unwrap();
    assert_eq!(field(&body, "length"), [trace.len().to_string()]);
    assert_eq!(field(&body, "lasso"), ["none"]);
    assert_eq!(field(&body, "state").len(), trace.len());
    assert_eq!(field(&body, "action")[0], "Init");
    assert_eq!(field(&body, "changed")[0], "");
    assert!(field(&body, "changed")[1..].iter().all(|c| !c.is_empty()));
    assert_eq!(field(&body, "pc")[0], "(0 :> \"b\" @@ 1 :> \"b\")");

    let (s, _) = get(&app, "/api/profile").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn expressions_evaluate_live() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(tmp.path(), "SimpleBad", false);
    let app = router(dir.clone());
    let n = dir.trace().unwrap().len();
    let (s, body) = call(&app, "POST", "/api/trace/expressions", "_TEPosition\nmoved == x' # x\n").await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(field(&body, "positions"), [n.to_string()]);
    assert_eq!(field(&body, "name"), ["expr1", "moved"]);
    assert_eq!(field(&body, "pair_level"), ["false", "true"]);
    let expected: Vec<String> = (1..=n).map(|k| k.to_string()).collect();
    assert_eq!(field(&body, "expr1"), expected);
    assert_eq!(field(&body, "moved").last(), Some(&"<no successor>"));
    assert_eq!(dir.read(EXPRESSIONS_CACHE).unwrap(), "_TEPosition\nmoved == x' # x\n");
    let (s, cached) = get(&app, "/api/trace/expressions").await;
    assert_eq!((s, cached.as_str()), (StatusCode::OK, "_TEPosition\nmoved == x' # x\n"));
    assert_eq!(field(&get(&app, "/api/status").await.1, "cached_expressions"), ["2"]);

    // definitions of the checked module are in scope
    let (s, body) = call(&app, "POST", "/api/trace/expressions", "AllDone\n").await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let done = field(&body, "expr1");
    assert_eq!(done.last(), Some(&"TRUE"));
    assert!(done[..n - 1].iter().all(|v| *v == "FALSE"));
}

#[tokio::test]
async fn malformed_expressions_report_positions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(tmp.path(), "SimpleBad", false);
    let app = router(dir.clone());
    let (s, body) = call(&app, "POST", "/api/trace/expressions", "x\n\n\\* note\ny + )\n").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(field(&body, "expression"), ["2"]);
    assert_eq!(field(&body, "line"), ["4"]);
    assert_eq!(field(&body, "col"), ["5"]);
    assert_eq!(field(&body, "error").len(), 1);

    let (s, body) = call(&app, "POST", "/api/trace/expressions", "x == 1\n").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body.contains("already in use"));
    assert!(!dir.has(EXPRESSIONS_CACHE));
}

#[tokio::test]
async fn profile_buckets_match_the_heatmap() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(tmp.path(), "SimpleInefficient", true);
    let app = router(dir.clone());
    let p = dir.report().unwrap().profile.unwrap();
    for (metric, k) in [(Metric::Invocations, 10), (Metric::Cost, 4), (Metric::TotalStates, 5), (Metric::DistinctStates, 2)] {
        let (s, body) = get(&app, &format!("/api/profile?metric={}&buckets={k}", metric.name())).await;
        assert_eq!(s, StatusCode::OK);
        let cells = p.heatmap(metric, k);
        let buckets: Vec<String> = cells.iter().map(|c| c.bucket.to_string()).collect();
        let locations: Vec<String> = cells.iter().map(|c| c.location.to_string()).collect();
        assert_eq!(field(&body, "bucket"), buckets);
        assert_eq!(field(&body, "cell"), locations);
        assert_eq!(field(&body, "max"), [p.metric_max.get(metric).to_string()]);
    }
    let (_, body) = get(&app, "/api/profile?metric=total_states").await;
    assert_eq!(field(&body, "never_enabled")[0], "d");
    assert_eq!(field(&body, "action"), ["Init", "a", "b", "d"].map(String::from));
    assert_eq!(get(&app, "/api/profile?metric=heat").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/profile?buckets=1").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/trace").await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "POST", "/api/trace/expressions", "1\n").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn source_with_ranges() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(tmp.path(), "Simple", false);
    let app = router(dir.clone());
    let (s, body) = get(&app, "/api/source?module=Simple").await;
    assert_eq!(s, StatusCode::OK);
    let source = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/Simple.spec")).unwrap();
    let (head, text) = body.split_once("\n\n").unwrap();
    assert_eq!(text, source);
    assert_eq!(field(head, "lines"), [source.lines().count().to_string()]);
    let ranges = field(head, "range");
    assert_eq!(field(head, "ranges"), [ranges.len().to_string()]);
    assert!(ranges.iter().any(|r| r.starts_with("a @ line 15, col 12")));
    assert_eq!(get(&app, "/api/source?module=Other").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/source").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/nothing").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serving_leaves_the_run_untouched_but_the_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(tmp.path(), "SimpleBad", true);
    let before = snapshot(&dir.path);
    let app = router(dir.clone());
    for uri in ["/api/status", "/api/report", "/api/trace", "/api/profile?metric=cost", "/api/source?module=SimpleBad"] {
        assert_eq!(get(&app, uri).await.0, StatusCode::OK, "{uri}");
    }
    let posts: Vec<_> = (1..=4).map(|k| {
        let app = app.clone();
        tokio::spawn(async move { call(&app, "POST", "/api/trace/expressions", &format!("_TEPosition + {k}\n")).await })
    }).collect();
    for p in posts {
        assert_eq!(p.await.unwrap().0, StatusCode::OK);
    }
    let mut after = snapshot(&dir.path);
    assert!(after.remove(EXPRESSIONS_CACHE).is_some());
    assert_eq!(before, after);
}
