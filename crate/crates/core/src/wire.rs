//! The framed back-end output protocol.
//!
//! A statement is a block of lines between `@!@!@STARTMSG <code>[:<class>] @!@!@`
//! and `@!@!@ENDMSG <code> @!@!@`. [`WireParser`] accepts the stream in
//! arbitrary chunks: bytes are buffered into lines, lines are grouped into
//! frames, frames become [`WireMessage`]s. Text outside frames and broken
//! frames are reported rather than dropped.
//!
//! Message catalog (version 1):
//!
//! | code | body |
//! |------|------|
//! | 1000 | run header: catalog version, module, seed, workers, distributed, variables |
//! | 2200 | progress after a BFS level |
//! | 2201 | one action's total and distinct states |
//! | 2202 | one expression location's invocations and cost |
//! | 2203 | one (call chain, location) row |
//! | 2204 | profile header |
//! | 2217 | one trace state |
//! | 9100 | lasso marker `Back to state <n>` |
//! | 2186 | final outcome and statistics |

use std::fmt::Write;
use std::sync::Arc;

use crate::engine::{ActionCount, CheckReport, CheckStatistics, ErrorTrace, Outcome, Progress, TraceStep};
use crate::kernel::{parse_value, render_value, State, Value};
use crate::lang::SourceRange;
use crate::profiler::{ActionStat, CallChainStat, EvalStat, ProfileReport};

pub const START_TOKEN: &str = "@!@!@STARTMSG ";
pub const END_TOKEN: &str = "@!@!@ENDMSG ";
const FRAME_TAIL: &str = " @!@!@";
const FRAME_MARK: &str = "@!@!@";

pub const CATALOG_VERSION: u32 = 1;

pub const UNFRAMED: i32 = -1;
pub const MALFORMED: i32 = -2;

pub const MSG_HEADER: i32 = 1000;
pub const MSG_PROGRESS: i32 = 2200;
pub const MSG_ACTION: i32 = 2201;
pub const MSG_EVAL: i32 = 2202;
pub const MSG_CHAIN: i32 = 2203;
pub const MSG_PROFILE: i32 = 2204;
pub const MSG_TRACE_STATE: i32 = 2217;
pub const MSG_BACK_TO: i32 = 9100;
pub const MSG_FINAL: i32 = 2186;

/// Class carried on trace-state frames, as in TLC output.
const TRACE_STATE_CLASS: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub code: i32,
    pub class: Option<u32>,
    pub body: Vec<String>,
}

impl WireMessage {
    pub fn new(code: i32, class: Option<u32>, body: Vec<String>) -> Self {
        WireMessage { code, class, body }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("message body line {line} contains a frame token")]
    FrameTokenInBody { line: usize },
    #[error("message code must be non-negative, got {0}")]
    NegativeCode(i32),
    #[error("stream ended inside message {code} after {} line(s)", lines.len())]
    Truncated { code: i32, class: Option<u32>, lines: Vec<String> },
    #[error("expected message {expected}, got {found}")]
    WrongCode { expected: i32, found: i32 },
    #[error("line {line}, col {col} of the statement: {message}")]
    Statement { line: usize, col: usize, message: String },
}

/// Frames `msg`.
pub fn emit(msg: &WireMessage) -> Result<String, WireError> {
    if msg.code < 0 {
        return Err(WireError::NegativeCode(msg.code));
    }
    let mut s = String::new();
    emit_into(&mut s, msg)?;
    Ok(s)
}

fn emit_into(s: &mut String, msg: &WireMessage) -> Result<(), WireError> {
    if let Some(i) = msg.body.iter().position(|l| l.contains(FRAME_MARK) || l.contains('\n')) {
        return Err(WireError::FrameTokenInBody { line: i + 1 });
    }
    s.push_str(START_TOKEN);
    let _ = write!(s, "{}", msg.code);
    if let Some(c) = msg.class {
        let _ = write!(s, ":{c}");
    }
    s.push_str(FRAME_TAIL);
    s.push('\n');
    for l in &msg.body {
        s.push_str(l);
        s.push('\n');
    }
    let _ = writeln!(s, "{END_TOKEN}{}{FRAME_TAIL}", msg.code);
    Ok(())
}

/// `(code, class)` of a STARTMSG line.
fn parse_start(line: &str) -> Option<Option<(i32, Option<u32>)>> {
    let rest = line.strip_prefix(START_TOKEN)?;
    let inner = rest.strip_suffix(FRAME_TAIL).map(str::trim);
    Some(inner.and_then(|inner| {
        let (code, class) = match inner.split_once(':') {
            Some((c, k)) => (c, Some(k.parse::<u32>().ok()?)),
            None => (inner, None),
        };
        let code: i32 = code.parse().ok().filter(|c: &i32| *c >= 0)?;
        Some((code, class))
    }))
}

fn parse_end(line: &str) -> Option<Option<i32>> {
    let rest = line.strip_prefix(END_TOKEN)?;
    Some(rest.strip_suffix(FRAME_TAIL).and_then(|c| c.trim().parse().ok()))
}

struct OpenFrame {
    header: String,
    code: i32,
    class: Option<u32>,
    body: Vec<String>,
}

/// Incremental parser state for one stream.
#[derive(Default)]
pub struct WireParser {
    partial: Vec<u8>,
    open: Option<OpenFrame>,
}

impl WireParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Consumes a chunk and returns the messages it completed.
    pub fn feed(&mut self, chunk: &[u8]) -> Vec<WireMessage> {
        let mut out = Vec::new();
        let mut rest = chunk;
        while let Some(i) = rest.iter().position(|&b| b == b'\n') {
            self.partial.extend_from_slice(&rest[..i]);
            let bytes = std::mem::take(&mut self.partial);
            self.line(&bytes, &mut out);
            rest = &rest[i + 1..];
        }
        self.partial.extend_from_slice(rest);
        out
    }

    /// Ends the stream. A final line without newline is processed; a frame
    /// still open is reported as truncated.
    pub fn finish(mut self) -> (Vec<WireMessage>, Option<WireError>) {
        let mut out = Vec::new();
        if !self.partial.is_empty() {
            let bytes = std::mem::take(&mut self.partial);
            self.line(&bytes, &mut out);
        }
        let err = self.open.take().map(|f| WireError::Truncated { code: f.code, class: f.class, lines: f.body });
        (out, err)
    }

    fn line(&mut self, bytes: &[u8], out: &mut Vec<WireMessage>) {
        let text = String::from_utf8_lossy(bytes);
        let line = text.strip_suffix('\r').unwrap_or(&text).to_string();
        if let Some(start) = parse_start(&line) {
            if let Some(f) = self.open.take() {
                // a new frame begins before the old one ended
                let mut lines = vec![f.header];
                lines.extend(f.body);
                out.push(WireMessage::new(MALFORMED, None, lines));
            }
            match start {
                Some((code, class)) => self.open = Some(OpenFrame { header: line, code, class, body: Vec::new() }),
                None => out.push(WireMessage::new(MALFORMED, None, vec![line])),
            }
            return;
        }
        if let Some(end) = parse_end(&line) {
            match self.open.take() {
                Some(f) if end == Some(f.code) => out.push(WireMessage::new(f.code, f.class, f.body)),
                Some(f) => {
                    let mut lines = vec![f.header];
                    lines.extend(f.body);
                    lines.push(line);
                    out.push(WireMessage::new(MALFORMED, None, lines));
                }
                None => out.push(WireMessage::new(MALFORMED, None, vec![line])),
            }
            return;
        }
        match &mut self.open {
            Some(f) => f.body.push(line),
            None => out.push(WireMessage::new(UNFRAMED, None, vec![line])),
        }
    }
}

/// Parses a complete byte stream.
pub fn parse_stream(bytes: &[u8]) -> (Vec<WireMessage>, Option<WireError>) {
    let mut p = WireParser::new();
    let mut msgs = p.feed(bytes);
    let (tail, err) = p.finish();
    msgs.extend(tail);
    (msgs, err)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStateStatement {
    pub ordinal: usize,
    pub action: String,
    pub range: SourceRange,
    /// In statement order.
    pub conjuncts: Vec<(String, Value)>,
}

impl TraceStateStatement {
    pub fn state(&self) -> State {
        State::from_bindings(self.conjuncts.iter().map(|(n, v)| (n.as_str(), v.clone())))
    }
}

fn stmt_err(line: usize, col: usize, message: impl Into<String>) -> WireError {
    WireError::Statement { line, col, message: message.into() }
}

/// Parses `<ordinal>: <<action> line L, col C to line L2, col C2 of module M>`.
fn parse_state_header(h: &str) -> Result<(usize, String, SourceRange), WireError> {
    let (ord, rest) = h.split_once(": <").ok_or_else(|| stmt_err(1, 1, format!("malformed state header `{h}`")))?;
    let ordinal = ord.trim().parse().map_err(|_| stmt_err(1, 1, format!("bad state ordinal `{ord}`")))?;
    let inner = rest.trim_end().strip_suffix('>').ok_or_else(|| stmt_err(1, h.len(), "state header lacks `>`"))?;
    let (action, loc) = inner.split_once(" line ").ok_or_else(|| stmt_err(1, ord.len() + 3, "state header lacks a location"))?;
    let range = SourceRange::parse_tlc(&format!("line {loc}"))
        .ok_or_else(|| stmt_err(1, ord.len() + 3 + action.len(), format!("malformed location `line {loc}`")))?;
    Ok((ordinal, action.to_string(), range))
}

/// Parses a 2217 statement. Conjunct values may continue over lines that
/// lack the `/\` prefix.
pub fn parse_trace_state(msg: &WireMessage) -> Result<TraceStateStatement, WireError> {
    if msg.code != MSG_TRACE_STATE {
        return Err(WireError::WrongCode { expected: MSG_TRACE_STATE, found: msg.code });
    }
    let header = msg.body.first().ok_or_else(|| stmt_err(1, 1, "empty trace state statement"))?;
    let (ordinal, action, range) = parse_state_header(header)?;
    // (statement line of the conjunct, name, value text, column where the value starts)
    let mut raw: Vec<(usize, String, String, usize)> = Vec::new();
    for (i, line) in msg.body.iter().enumerate().skip(1) {
        let line_no = i + 1;
        if let Some(rest) = line.strip_prefix("/\\ ") {
            let (name, value) = rest
                .split_once(" = ")
                .or_else(|| rest.strip_suffix(" =").map(|n| (n, "")))
                .ok_or_else(|| stmt_err(line_no, 4, format!("expected `/\\ name = value`, found `{line}`")))?;
            raw.push((line_no, name.trim().to_string(), value.to_string(), 3 + name.len() + 4));
        } else if let Some(last) = raw.last_mut() {
            last.2.push('\n');
            last.2.push_str(line);
        } else if !line.trim().is_empty() {
            return Err(stmt_err(line_no, 1, format!("expected a conjunct, found `{line}`")));
        }
    }
    let mut conjuncts = Vec::with_capacity(raw.len());
    for (line_no, name, text, col) in raw {
        let v = parse_value(&text).map_err(|e| {
            let (l, c) = if e.line == 1 { (line_no, col + e.col - 1) } else { (line_no + e.line - 1, e.col) };
            stmt_err(l, c, format!("value of `{name}`: {}", e.message))
        })?;
        conjuncts.push((name, v));
    }
    Ok(TraceStateStatement { ordinal, action, range, conjuncts })
}

/// The 2217 statement for one trace step, conjuncts in `variables` order.
pub fn trace_state_message(step: &TraceStep, variables: &[Arc<str>]) -> WireMessage {
    let mut body = vec![format!("{}: <{} {}>", step.ordinal, step.action, step.range)];
    for v in variables {
        if let Some(val) = step.state.get(v) {
            body.push(format!("/\\ {v} = {}", render_value(val)));
        }
    }
    WireMessage::new(MSG_TRACE_STATE, Some(TRACE_STATE_CLASS), body)
}

pub fn trace_messages(trace: &ErrorTrace, variables: &[Arc<str>]) -> Vec<WireMessage> {
    let mut out: Vec<WireMessage> = trace.states.iter().map(|s| trace_state_message(s, variables)).collect();
    if let Some(b) = trace.lasso_back_to {
        out.push(WireMessage::new(MSG_BACK_TO, None, vec![format!("Back to state {b}")]));
    }
    out
}

/// Rebuilds a trace from 2217 and 9100 messages, ignoring all others.
pub fn trace_from_messages(msgs: &[WireMessage]) -> Result<ErrorTrace, WireError> {
    let mut states = Vec::new();
    let mut lasso_back_to = None;
    for m in msgs {
        match m.code {
            MSG_TRACE_STATE => {
                let st = parse_trace_state(m)?;
                states.push(TraceStep { ordinal: st.ordinal, action: Arc::from(st.action.as_str()), range: st.range.clone(), state: st.state() });
            }
            MSG_BACK_TO => lasso_back_to = m.body.first().and_then(|l| l.strip_prefix("Back to state ")).and_then(|n| n.trim().parse().ok()),
            _ => {}
        }
    }
    Ok(ErrorTrace { states, lasso_back_to })
}

fn kv(key: &str, v: impl std::fmt::Display) -> String {
    format!("{key}: {v}")
}

fn outcome_fields(o: &Outcome) -> (&'static str, String) {
    match o {
        Outcome::Ok => ("ok", String::new()),
        Outcome::InvariantViolated(n) => ("invariant_violated", n.clone()),
        Outcome::Deadlock => ("deadlock", String::new()),
        Outcome::Error(m) => ("error", m.replace('\n', " ")),
    }
}

/// The report as a message sequence.
pub fn report_messages(r: &CheckReport) -> Vec<WireMessage> {
    let st = &r.statistics;
    let mut out = vec![WireMessage::new(
        MSG_HEADER,
        None,
        vec![
            kv("catalog", CATALOG_VERSION),
            kv("module", &r.module),
            kv("seed", r.seed),
            kv("workers", r.workers),
            kv("distributed", r.distributed),
            kv("variables", r.variables.join(", ")),
        ],
    )];
    for p in &st.progress {
        out.push(WireMessage::new(
            MSG_PROGRESS,
            None,
            vec![kv("diameter", p.diameter), kv("total", p.total), kv("distinct", p.distinct), kv("unexplored", p.unexplored)],
        ));
    }
    for a in &st.per_action {
        out.push(WireMessage::new(
            MSG_ACTION,
            None,
            vec![kv("action", &a.name), kv("location", &a.range), kv("total", a.total), kv("distinct", a.distinct)],
        ));
    }
    if let Some(p) = &r.profile {
        out.push(WireMessage::new(MSG_PROFILE, None, vec![kv("seed", p.seed)]));
        for e in &p.eval {
            out.push(WireMessage::new(MSG_EVAL, None, eval_lines(e)));
        }
        for c in &p.chains {
            for e in &c.stats {
                let mut body = vec![kv("chain", c.chain.join(">"))];
                body.extend(eval_lines(e));
                out.push(WireMessage::new(MSG_CHAIN, None, body));
            }
        }
    }
    if let Some(t) = &r.trace {
        out.extend(trace_messages(t, &r.variables));
    }
    let (outcome, detail) = outcome_fields(&r.outcome);
    out.push(WireMessage::new(
        MSG_FINAL,
        None,
        vec![
            kv("outcome", outcome),
            kv("detail", detail),
            kv("diameter", st.diameter),
            kv("distinct", st.distinct_states),
            kv("total", st.total_states),
            kv("constrained", st.constrained),
            kv("transitions", st.transitions),
            kv("collision_probability", r.collision_probability),
        ],
    ));
    out
}

fn eval_lines(e: &EvalStat) -> Vec<String> {
    vec![kv("location", &e.location), kv("invocations", e.invocations), kv("cost", e.cost)]
}

/// The report as a framed text stream.
pub fn emit_report(r: &CheckReport) -> String {
    let mut s = String::new();
    for m in report_messages(r) {
        emit_into(&mut s, &m).expect("report bodies never contain frame tokens");
    }
    s
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RebuildError {
    #[error("the stream contains no messages")]
    Empty,
    #[error("incomplete report ({reason}); statistics up to the last progress message were salvaged")]
    Partial { reason: String, statistics: CheckStatistics },
    #[error("malformed {code} message: {message}")]
    Malformed { code: i32, message: String },
    #[error(transparent)]
    Wire(#[from] WireError),
}

struct Fields<'a> {
    code: i32,
    body: &'a [String],
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Result<&'a str, RebuildError> {
        self.body
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ").or_else(|| (r == ":").then_some(""))))
            .ok_or_else(|| RebuildError::Malformed { code: self.code, message: format!("missing `{key}`") })
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T, RebuildError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| RebuildError::Malformed { code: self.code, message: format!("bad `{key}` value `{v}`") })
    }

    fn location(&self) -> Result<SourceRange, RebuildError> {
        let v = self.get("location")?;
        SourceRange::parse_tlc(v).ok_or_else(|| RebuildError::Malformed { code: self.code, message: format!("bad location `{v}`") })
    }

    fn eval_stat(&self) -> Result<EvalStat, RebuildError> {
        Ok(EvalStat { location: self.location()?, invocations: self.num("invocations")?, cost: self.num("cost")? })
    }
}

/// Rebuilds a report from its message sequence. Unframed and unknown
/// messages are ignored.
pub fn rebuild_report(msgs: &[WireMessage]) -> Result<CheckReport, RebuildError> {
    if msgs.is_empty() {
        return Err(RebuildError::Empty);
    }
    let mut header = None;
    let mut stats = CheckStatistics::default();
    let mut profile_seed = None;
    let mut eval = Vec::new();
    let mut chains: Vec<CallChainStat> = Vec::new();
    let mut trace_msgs = Vec::new();
    let mut fin = None;
    for m in msgs {
        let f = Fields { code: m.code, body: &m.body };
        match m.code {
            MSG_HEADER => header = Some(f),
            MSG_PROGRESS => stats.progress.push(Progress {
                diameter: f.num("diameter")?,
                total: f.num("total")?,
                distinct: f.num("distinct")?,
                unexplored: f.num("unexplored")?,
            }),
            MSG_ACTION => stats.per_action.push(ActionCount {
                name: Arc::from(f.get("action")?),
                range: f.location()?,
                total: f.num("total")?,
                distinct: f.num("distinct")?,
            }),
            MSG_PROFILE => profile_seed = Some(f.num::<u64>("seed")?),
            MSG_EVAL => eval.push(f.eval_stat()?),
            MSG_CHAIN => {
                let chain_text = f.get("chain")?;
                let chain: Vec<Arc<str>> =
                    if chain_text.is_empty() { Vec::new() } else { chain_text.split('>').map(Arc::from).collect() };
                let stat = f.eval_stat()?;
                match chains.last_mut() {
                    Some(c) if c.chain == chain => c.stats.push(stat),
                    _ => chains.push(CallChainStat { chain, stats: vec![stat] }),
                }
            }
            MSG_TRACE_STATE | MSG_BACK_TO => trace_msgs.push(m.clone()),
            MSG_FINAL => fin = Some(f),
            _ => {}
        }
    }
    if let Some(p) = stats.progress.last() {
        stats.diameter = p.diameter;
        stats.total_states = p.total;
        stats.distinct_states = p.distinct;
    }
    let Some(h) = header else {
        return Err(RebuildError::Partial { reason: "no run header".into(), statistics: stats });
    };
    let Some(fin) = fin else {
        return Err(RebuildError::Partial { reason: "no final result message".into(), statistics: stats });
    };
    let outcome = match fin.get("outcome")? {
        "ok" => Outcome::Ok,
        "invariant_violated" => Outcome::InvariantViolated(fin.get("detail")?.to_string()),
        "deadlock" => Outcome::Deadlock,
        "error" => Outcome::Error(fin.get("detail")?.to_string()),
        other => return Err(RebuildError::Malformed { code: MSG_FINAL, message: format!("unknown outcome `{other}`") }),
    };
    stats.diameter = fin.num("diameter")?;
    stats.distinct_states = fin.num("distinct")?;
    stats.total_states = fin.num("total")?;
    stats.constrained = fin.num("constrained")?;
    stats.transitions = fin.num("transitions")?;
    let variables: Vec<Arc<str>> = {
        let v = h.get("variables")?;
        if v.is_empty() { Vec::new() } else { v.split(", ").map(Arc::from).collect() }
    };
    let trace = if trace_msgs.is_empty() { None } else { Some(trace_from_messages(&trace_msgs)?) };
    let profile = profile_seed.map(|seed| {
        let actions = stats
            .per_action
            .iter()
            .map(|a| ActionStat { name: a.name.clone(), location: a.range.clone(), total: a.total, distinct: a.distinct })
            .collect();
        ProfileReport::new(eval, chains, actions, seed)
    });
    Ok(CheckReport {
        module: Arc::from(h.get("module")?),
        variables,
        outcome,
        statistics: stats,
        collision_probability: fin.num("collision_probability")?,
        trace,
        profile,
        seed: h.num("seed")?,
        workers: h.num("workers")?,
        distributed: h.num("distributed")?,
    })
}

/// Parses a stream and rebuilds the report it carries.
pub fn report_from_stream(bytes: &[u8]) -> Result<CheckReport, RebuildError> {
    let (msgs, err) = parse_stream(bytes);
    match rebuild_report(&msgs) {
        Ok(r) => match err {
            None => Ok(r),
            Some(e) => Err(e.into()),
        },
        Err(RebuildError::Empty) if err.is_some() => Err(err.unwrap().into()),
        Err(e) => Err(e),
    }
}

/// One line per message: code, class and line count.
pub fn summarize(msgs: &[WireMessage]) -> String {
    let mut s = String::new();
    for m in msgs {
        let class = m.class.map(|c| format!(":{c}")).unwrap_or_default();
        let first = m.body.first().map(String::as_str).unwrap_or("");
        let _ = writeln!(s, "{}{class}\t{} line(s)\t{first}", m.code, m.body.len());
    }
    s
}
