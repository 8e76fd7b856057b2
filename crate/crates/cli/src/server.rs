//! Read-only HTTP API over a run directory.
//!
//! Every payload is `text/plain` made of `key: value` lines. Lists of
//! records are blocks separated by a blank line.
//!
//! | endpoint | payload |
//! |---|---|
//! | `GET /api/status` | `run`, `module`, `outcome`, `has_trace`, `has_profile`, `has_graph`, `cached_expressions` |
//! | `GET /api/report` | the run's report summary |
//! | `GET /api/trace` | header (`length`, `lasso`, `variables`), then one block per state: `state`, `action`, `location`, `changed`, then `var: value` |
//! | `POST /api/trace/expressions` | body: one expression per line. Reply: header (`positions`, `expressions`), one block per expression (`expression`, `name`, `source`, `pair_level`), one block per position (`position`, then `name: value`) |
//! | `GET /api/trace/expressions` | the cached expression list |
//! | `GET /api/profile?metric=M&buckets=K` | header (`metric`, `buckets`, `max`, `never_enabled`), `action` blocks (`action`, `location`, `total`, `distinct`), `cell` blocks (`cell`, `value`, `bucket`, `never_enabled`) |
//! | `GET /api/source?module=M` | header (`module`, `lines`, `ranges`, then `range: name @ location` lines), a blank line, then the source text |
//!
//! Missing artifacts give 404, bad query parameters 400 and expressions
//! that do not parse 422 with `error`, `expression`, `line` and `col`.
//! Values use the canonical value syntax. The only file ever written is the
//! expressions cache.

use std::fmt::Write as _;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Deserialize;
use tlawb_core::kernel::render_value;
use tlawb_core::profiler::{Metric, DEFAULT_BUCKETS};
use tlawb_core::traceexp::{diff, explore, parse_expressions, Cell, ExploredTrace, TraceExpError};

use crate::rundir::{RunDir, EXPRESSIONS_CACHE, GRAPH_CSV, REPORT_FILE, SPEC_FILE, TRACE_FILE};
use crate::CliError;

pub const DEFAULT_PORT: u16 = 8712;

pub struct ServeState {
    dir: RunDir,
    /// Expression evaluations run one at a time.
    explore: tokio::sync::Mutex<()>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        ApiError { status, body: format!("error: {message}\n") }
    }

    fn missing(name: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("the run has no {name}"))
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        text(self.status, self.body)
    }
}

fn text(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
}

fn ok(body: String) -> Result<Response, ApiError> {
    Ok(text(StatusCode::OK, body))
}

type Shared = State<Arc<ServeState>>;

pub fn router(dir: RunDir) -> Router {
    let state = Arc::new(ServeState { dir, explore: tokio::sync::Mutex::new(()) });
    Router::new()
        .route("/api/status", get(status))
        .route("/api/report", get(report))
        .route("/api/trace", get(trace))
        .route("/api/trace/expressions", get(cached_expressions).post(expressions))
        .route("/api/profile", get(profile))
        .route("/api/source", get(source))
        .with_state(state)
}

/// Serves `dir` on the loopback interface until the process ends.
pub async fn serve(dir: RunDir, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    axum::serve(listener, router(dir)).await
}

async fn status(State(st): Shared) -> Result<Response, ApiError> {
    let d = &st.dir;
    let r = d.report()?;
    let cached = d.read(EXPRESSIONS_CACHE).map(|t| t.lines().filter(|l| !l.trim().is_empty()).count()).unwrap_or(0);
    ok(format!(
        "run: {}\nmodule: {}\noutcome: {}\nhas_trace: {}\nhas_profile: {}\nhas_graph: {}\ncached_expressions: {cached}\n",
        d.path.display(),
        r.module,
        r.outcome,
        d.has(TRACE_FILE),
        r.profile.is_some(),
        d.has(GRAPH_CSV),
    ))
}

async fn report(State(st): Shared) -> Result<Response, ApiError> {
    if !st.dir.has(REPORT_FILE) {
        return Err(ApiError::missing(REPORT_FILE));
    }
    ok(st.dir.read(REPORT_FILE)?)
}

fn load_trace(st: &ServeState) -> Result<tlawb_core::engine::ErrorTrace, ApiError> {
    if !st.dir.has(TRACE_FILE) {
        return Err(ApiError::missing("trace"));
    }
    Ok(st.dir.trace()?)
}

async fn trace(State(st): Shared) -> Result<Response, ApiError> {
    let t = load_trace(&st)?;
    let variables = st.dir.report()?.variables;
    let changed = diff(&t);
    let mut s = String::new();
    let _ = writeln!(s, "length: {}", t.len());
    let _ = writeln!(s, "lasso: {}", t.lasso_back_to.map_or("none".to_string(), |b| b.to_string()));
    let _ = writeln!(s, "variables: {}", variables.join(", "));
    for (step, ch) in t.states.iter().zip(&changed) {
        let names: Vec<&str> = ch.iter().map(|n| &**n).collect();
        let _ = write!(s, "\nstate: {}\naction: {}\nlocation: {}\nchanged: {}\n", step.ordinal, step.action, step.range, names.join(", "));
        for v in &variables {
            if let Some(val) = step.state.get(v) {
                let _ = writeln!(s, "{v}: {}", render_value(val));
            }
        }
    }
    ok(s)
}

/// 1-based line of the `index`-th expression in `text`.
fn expression_line(text: &str, index: usize) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with("\\*"))
        .nth(index - 1)
        .map_or(0, |(i, _)| i + 1)
}

fn render_explored(x: &ExploredTrace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "positions: {}", x.values.len());
    let _ = writeln!(s, "expressions: {}", x.expressions.len());
    for (i, e) in x.expressions.iter().enumerate() {
        let _ = write!(s, "\nexpression: {}\nname: {}\nsource: {}\npair_level: {}\n", i + 1, e.name, e.source, e.pair_level);
    }
    for (k, row) in x.values.iter().enumerate() {
        let _ = writeln!(s, "\nposition: {}", k + 1);
        for (e, cell) in x.expressions.iter().zip(row) {
            let _ = writeln!(s, "{}: {}", e.name, cell_text(cell));
        }
    }
    s
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Value(v) => render_value(v),
        Cell::NoSuccessor => "<no successor>".into(),
        Cell::Error(m) => format!("<error: {}>", m.replace('\n', " ")),
    }
}

async fn expressions(State(st): Shared, body: String) -> Result<Response, ApiError> {
    let t = load_trace(&st)?;
    let exprs = match parse_expressions(&body) {
        Ok(e) => e,
        Err(TraceExpError::Expression { index, line, col, message }) => {
            let line = expression_line(&body, index) + line as usize - 1;
            let body = format!("error: {message}\nexpression: {index}\nline: {line}\ncol: {col}\n");
            return Ok(text(StatusCode::UNPROCESSABLE_ENTITY, body));
        }
        Err(e) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e)),
    };
    let _queue = st.explore.lock().await;
    let base = st.dir.unit().ok();
    let explored = tokio::task::spawn_blocking(move || explore(base.as_ref(), &t, &exprs))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    match explored {
        Ok(x) => {
            let _ = std::fs::write(st.dir.file(EXPRESSIONS_CACHE), &body);
            ok(render_explored(&x))
        }
        Err(TraceExpError::Module(m)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, m)),
        Err(e) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e)),
    }
}

async fn cached_expressions(State(st): Shared) -> Result<Response, ApiError> {
    if !st.dir.has(EXPRESSIONS_CACHE) {
        return Err(ApiError::missing(EXPRESSIONS_CACHE));
    }
    ok(st.dir.read(EXPRESSIONS_CACHE)?)
}

#[derive(Deserialize)]
struct ProfileQuery {
    metric: Option<String>,
    buckets: Option<usize>,
}

async fn profile(State(st): Shared, Query(q): Query<ProfileQuery>) -> Result<Response, ApiError> {
    let name = q.metric.as_deref().unwrap_or("invocations");
    let metric = Metric::parse(name).ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("unknown metric `{name}`")))?;
    let buckets = q.buckets.unwrap_or(DEFAULT_BUCKETS);
    if buckets < 2 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "at least two buckets are needed"));
    }
    let p = st.dir.report()?.profile.ok_or_else(|| ApiError::missing("profile"))?;
    let never = p.never_enabled();
    let never = never.iter().map(|n| &**n).collect::<Vec<_>>().join(", ");
    let mut s = String::new();
    let _ = write!(s, "metric: {}\nbuckets: {buckets}\nmax: {}\nnever_enabled: {never}\n", metric.name(), p.metric_max.get(metric));
    for a in &p.actions {
        let _ = write!(s, "\naction: {}\nlocation: {}\ntotal: {}\ndistinct: {}\n", a.name, a.location, a.total, a.distinct);
    }
    for c in p.heatmap(metric, buckets) {
        let _ = write!(s, "\ncell: {}\nvalue: {}\nbucket: {}\nnever_enabled: {}\n", c.location, c.value, c.bucket, c.never_enabled);
    }
    ok(s)
}

#[derive(Deserialize)]
struct SourceQuery {
    module: String,
}

async fn source(State(st): Shared, Query(q): Query<SourceQuery>) -> Result<Response, ApiError> {
    if !st.dir.has(SPEC_FILE) {
        return Err(ApiError::missing(SPEC_FILE));
    }
    let unit = st.dir.unit()?;
    let m = &unit.module;
    if *m.name != *q.module {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no module `{}` in this run", q.module)));
    }
    let ranges: Vec<(String, String)> = unit
        .actions
        .iter()
        .map(|a| (a.name.to_string(), a.range.to_string()))
        .chain(m.definitions.iter().map(|d| (d.name.to_string(), d.range.to_string())))
        .collect();
    let mut s = String::new();
    let _ = write!(s, "module: {}\nlines: {}\nranges: {}\n", m.name, m.source.lines().count(), ranges.len());
    for (name, r) in &ranges {
        let _ = writeln!(s, "range: {name} @ {r}");
    }
    s.push('\n');
    s.push_str(&m.source);
    ok(s)
}
