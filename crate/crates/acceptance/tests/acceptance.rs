//! One PASS or FAIL line per acceptance criterion. Exits non-zero if any
//! criterion fails.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use oracle::{bfs, Channel, DieHard, Model, OracleOutcome, Simple, Variant};
use tlawb_cli::rundir::{check_command, CheckArgs, LOG_FILE, REPORT_FILE};
use tlawb_cloud::scenario::{bundled, parse_scenario, run_scenario, BUNDLED};
use tlawb_cloud::*;
use tlawb_core::engine::{check, CheckOptions, CheckReport, CheckRun, ErrorTrace, Outcome, TraceStep};
use tlawb_core::kernel::{parse_value, render_value, State, Value};
use tlawb_core::lang::{parse_config, parse_module, resolve, CheckUnit, SourceRange};
use tlawb_core::traceexp::{explore, parse_expressions, Cell};
use tlawb_core::wire::{parse_stream, parse_trace_state, WireError, WireMessage, WireParser};

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn text(name: &str) -> String {
    std::fs::read_to_string(models().join(name)).unwrap()
}

fn unit_with(spec_src: &str, cfg: &str) -> CheckUnit {
    resolve(&parse_module(spec_src).unwrap(), &parse_config(cfg).unwrap()).unwrap()
}

fn unit(spec: &str, cfg: &str) -> CheckUnit {
    unit_with(&text(spec), &text(cfg))
}

/// Every bundled model with each of its configurations.
const BUNDLED_MODELS: [(&str, &str); 8] = [
    ("Simple.spec", "Simple.cfg"),
    ("Simple.spec", "Simple2.cfg"),
    ("SimpleBad.spec", "SimpleBad.cfg"),
    ("SimpleInefficient.spec", "SimpleInefficient.cfg"),
    ("SimpleFixed.spec", "SimpleFixed.cfg"),
    ("DieHard.spec", "DieHard.cfg"),
    ("Channel.spec", "Channel.cfg"),
    ("Subsets.spec", "Subsets.cfg"),
];

// ---------------------------------------------------------------- values

const STRING_CHARS: &[char] = &['a', 'z', 'Q', '0', '9', ' ', '"', '\\', ':', '>', '@', ',', '{', '}', '(', ')', '<', '|', '-', '_'];

fn random_string(rng: &mut StdRng) -> String {
    (0..rng.gen_range(0..8)).map(|_| STRING_CHARS[rng.gen_range(0..STRING_CHARS.len())]).collect()
}

fn random_value(rng: &mut StdRng, depth: u32) -> Value {
    if depth == 0 || rng.gen_bool(0.35) {
        return match rng.gen_range(0..5) {
            0 => Value::Bool(rng.gen()),
            1 => Value::int(rng.gen_range(-20i64..20)),
            2 => Value::int(rng.gen::<i64>()),
            3 => Value::int(rng.gen::<i128>()),
            _ => Value::str(random_string(rng)),
        };
    }
    let n = rng.gen_range(0..4);
    match rng.gen_range(0..4) {
        0 => Value::set_from((0..n).map(|_| random_value(rng, depth - 1))),
        1 => Value::seq((0..n).map(|_| random_value(rng, depth - 1)).collect()),
        2 => Value::fn_from((0..n).map(|_| (random_value(rng, depth - 1), random_value(rng, depth - 1)))),
        _ => {
            let fields: Vec<(String, Value)> = (0..n).map(|_| (format!("f{}", rng.gen_range(0..5)), random_value(rng, depth - 1))).collect();
            Value::record(fields)
        }
    }
}

const SAMPLE_STREAM: &str = concat!(
    "\" @@ 3 :> \"a\" @@ 4 :> \"a\")\n",
    "@!@!@ENDMSG 2217 @!@!@\n",
    "@!@!@STARTMSG 2217:4 @!@!@\n",
    "5: <next_action line 175, col 3 to line 209, col 2 of module TE>\n",
    "/\\ X = 1\n",
    "/\\ Y = 0\n",
    "/\\ Process = 2\n",
    "/\\ Clock = \"{\\\"0\\\":1, \\\"1\\\":2, \\\"2\\\":1}\"\n",
    "/\\ x = (0 :> 1 @@ 1 :> 1 @@ 2 :> 1)\n",
    "/\\ y = (0 :> 0 @@ 1 :> 1 @@ 2 :> 0)\n",
    "/\\ pc = (0 :> \"b\" @@ 1 :> \"Done\" @@ 2 :> \"b\")\n",
    "@!@!@ENDMSG 2217 @!@!@\n",
    "@!@!@STARTMSG 2217:4 @!@!@\n",
    "6: <next_action line 220, col 3 to line 254, col 2 of module TE>\n",
    "/\\ X = ",
);

fn int_fn(values: [Value; 3]) -> Value {
    Value::fn_from(values.into_iter().enumerate().map(|(i, v)| (Value::int(i as i64), v)))
}

fn value_round_trip() -> String {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    for i in 0..1000 {
        let v = random_value(&mut rng, 4);
        let r = render_value(&v);
        assert_eq!(parse_value(&r).as_ref(), Ok(&v), "value {i}: {r}");
    }
    let (msgs, _) = parse_stream(SAMPLE_STREAM.as_bytes());
    let st = parse_trace_state(&msgs[2]).unwrap();
    let expected = vec![
        ("X", Value::int(1)),
        ("Y", Value::int(0)),
        ("Process", Value::int(2)),
        ("Clock", Value::str("{\"0\":1, \"1\":2, \"2\":1}")),
        ("x", int_fn([Value::int(1), Value::int(1), Value::int(1)])),
        ("y", int_fn([Value::int(0), Value::int(1), Value::int(0)])),
        ("pc", int_fn([Value::str("b"), Value::str("Done"), Value::str("b")])),
    ];
    let got: Vec<(&str, Value)> = st.conjuncts.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
    assert_eq!(got, expected);
    for (_, v) in &expected {
        assert_eq!(parse_value(&render_value(v)).unwrap(), *v);
    }
    "1000 random values and 7 sample trace conjuncts".into()
}

// ---------------------------------------------------------------- chunks

type Parsed = (Vec<WireMessage>, Option<WireError>);

fn chunked(bytes: &[u8], cuts: &[usize]) -> Parsed {
    let mut p = WireParser::new();
    let mut out = Vec::new();
    let mut prev = 0;
    for &c in cuts.iter().chain(std::iter::once(&bytes.len())) {
        out.extend(p.feed(&bytes[prev..c]));
        prev = c;
    }
    let (tail, err) = p.finish();
    out.extend(tail);
    (out, err)
}

fn random_line(rng: &mut StdRng) -> String {
    let mut s = random_string(rng);
    if rng.gen_bool(0.2) {
        s.push_str("/\\ v = (0 :> 1)");
    }
    s
}

fn random_stream(rng: &mut StdRng) -> Vec<u8> {
    let mut s = String::new();
    for _ in 0..rng.gen_range(1..7) {
        let nl = if rng.gen_bool(0.1) { "\r\n" } else { "\n" };
        if rng.gen_bool(0.15) {
            s.push_str(&random_line(rng));
            s.push_str(nl);
            continue;
        }
        let code = [1000, 2200, 2201, 2217, 2186, 9100][rng.gen_range(0..6)];
        match rng.gen_bool(0.3) {
            true => s.push_str(&format!("@!@!@STARTMSG {code}:{} @!@!@{nl}", rng.gen_range(0..5))),
            false => s.push_str(&format!("@!@!@STARTMSG {code} @!@!@{nl}")),
        }
        for _ in 0..rng.gen_range(0..5) {
            s.push_str(&random_line(rng));
            s.push_str(nl);
        }
        if rng.gen_bool(0.95) {
            let end = if rng.gen_bool(0.05) { code + 1 } else { code };
            s.push_str(&format!("@!@!@ENDMSG {end} @!@!@{nl}"));
        }
    }
    if rng.gen_bool(0.2) {
        s.push_str("@!@!@STARTMSG 2217:4 @!@!@\n/\\ X = ");
    }
    s.into_bytes()
}

fn random_cuts(rng: &mut StdRng, len: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..rng.gen_range(2..12)).map(|_| rng.gen_range(0..=len)).collect();
    cuts.sort_unstable();
    cuts
}

fn invariant_under_chunking(bytes: &[u8], rng: &mut StdRng) -> usize {
    let whole = parse_stream(bytes);
    for i in 0..=bytes.len() {
        assert_eq!(chunked(bytes, &[i]), whole, "split at {i} of {:?}", String::from_utf8_lossy(bytes));
    }
    for _ in 0..100 {
        let cuts = random_cuts(rng, bytes.len());
        assert_eq!(chunked(bytes, &cuts), whole, "cuts {cuts:?}");
    }
    bytes.len() + 1 + 100
}

fn chunk_invariance() -> String {
    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    let mut partitions = invariant_under_chunking(SAMPLE_STREAM.as_bytes(), &mut rng);
    let codes: Vec<i32> = parse_stream(SAMPLE_STREAM.as_bytes()).0.iter().map(|m| m.code).collect();
    assert_eq!(codes, [-1, -2, 2217]);
    for _ in 0..200 {
        let s = random_stream(&mut rng);
        partitions += invariant_under_chunking(&s, &mut rng);
    }
    format!("sample stream and 200 random streams, {partitions} partitions")
}

// ---------------------------------------------------------------- oracle

fn agree<M: Model>(label: &str, m: &M, u: &CheckUnit) -> String {
    let r = check(u, &CheckOptions { retain_graph: true, ..Default::default() });
    let o = bfs(m);
    let st = &r.report.statistics;
    assert_eq!(o.outcome, OracleOutcome::Ok, "{label}");
    assert_eq!(r.report.outcome, Outcome::Ok, "{label}");
    assert_eq!((st.distinct_states, st.diameter, st.transitions), (o.distinct, o.diameter, o.transitions), "{label}");
    assert_eq!((st.total_states, st.constrained), (o.total, o.constrained), "{label}");
    let engine: HashSet<State> = r.graph.as_ref().unwrap().nodes.iter().map(|(_, s)| s.clone()).collect();
    let expected: HashSet<State> = o.states.iter().map(|s| m.to_state(s)).collect();
    assert!(engine == expected, "{label}: reachable state sets differ");
    format!("{label} {}/{}/{}", o.distinct, o.diameter, o.transitions)
}

fn checker_vs_oracle() -> String {
    let parts = [
        agree("Simple N=2", &Simple { n: 2, variant: Variant::Correct }, &unit("Simple.spec", "Simple2.cfg")),
        agree("Simple N=3", &Simple { n: 3, variant: Variant::Correct }, &unit("Simple.spec", "Simple.cfg")),
        agree("DieHard", &DieHard { check_solved: false }, &unit_with(&text("DieHard.spec"), "INIT Init\nNEXT Next\nINVARIANT TypeOK\n")),
        agree("Channel", &Channel { msgs: vec!["m1", "m2"], cap: 2, bound: 4 }, &unit("Channel.spec", "Channel.cfg")),
    ];
    format!("distinct/diameter/transitions: {}", parts.join(", "))
}

// ---------------------------------------------------------------- profiler laws

fn laws(label: &str, r: &CheckReport) {
    let p = r.profile.as_ref().unwrap_or_else(|| panic!("{label}: no profile"));
    let st = &r.statistics;
    for a in &st.per_action {
        assert!(a.distinct <= a.total, "{label}: action {} distinct {} > total {}", a.name, a.distinct, a.total);
    }
    for a in &p.actions {
        assert!(a.distinct <= a.total, "{label}: profiled action {}", a.name);
    }
    assert_eq!(st.per_action.iter().map(|a| a.total).sum::<u64>(), st.total_states, "{label}: action totals");
    assert_eq!(p.actions.iter().map(|a| a.total).sum::<u64>(), st.total_states, "{label}: profiled action totals");
    let mut per_location: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for c in &p.chains {
        for e in &c.stats {
            let entry = per_location.entry(e.location.to_string()).or_default();
            entry.0 += e.invocations;
            entry.1 += e.cost;
        }
    }
    let global: BTreeMap<String, (u64, u64)> = p.eval.iter().map(|e| (e.location.to_string(), (e.invocations, e.cost))).collect();
    assert_eq!(per_location, global, "{label}: chain sums");
    let total_chain: u64 = p.chains.iter().flat_map(|c| &c.stats).map(|e| e.invocations).sum();
    assert_eq!(total_chain, p.eval.iter().map(|e| e.invocations).sum::<u64>(), "{label}: invocation sums");
}

fn micro_model(rng: &mut StdRng) -> (String, String) {
    let m = rng.gen_range(3..7);
    let mut actions = Vec::new();
    for i in 0..rng.gen_range(2..6) {
        let c = rng.gen_range(1..m);
        let g = rng.gen_range(0..m);
        let body = match rng.gen_range(0..6) {
            0 => format!("x < {g} /\\ x' = (x + {c}) % {m} /\\ y' = y"),
            1 => format!("y # {g} /\\ y' = (y + {c}) % {m} /\\ UNCHANGED x"),
            2 => format!("\\E k \\in 0..{c} : /\\ x' = k\n        /\\ y' = IF k = {g} THEN 0 ELSE y"),
            3 => format!("x > {} /\\ UNCHANGED <<x, y>>", m + 10),
            4 => format!("{{x, y}} \\subseteq 0..{g} /\\ x' = Cardinality({{x, y}}) /\\ y' = (y * {c}) % {m}"),
            _ => format!("(\\A s \\in SUBSET {{x, y, {g}}} : Cardinality(s) <= 3)\n        /\\ x' = (x * y + {c}) % {m} /\\ y' = x"),
        };
        actions.push((format!("A{i}"), body));
    }
    let mut spec = String::from("---- MODULE Micro ----\nVARIABLES x, y\n");
    spec.push_str(&format!("Init == x \\in 0..{} /\\ y = {}\n", rng.gen_range(0..m), rng.gen_range(0..m)));
    for (name, body) in &actions {
        spec.push_str(&format!("{name} == {body}\n"));
    }
    let names: Vec<&str> = actions.iter().map(|(n, _)| n.as_str()).collect();
    spec.push_str(&format!("Next == {}\nInv == x \\in 0..{m} /\\ y \\in 0..{m}\nBound == x + y < {}\n====\n", names.join(" \\/ "), rng.gen_range(m..2 * m)));
    let mut cfg = String::from("INIT Init\nNEXT Next\nINVARIANT Inv\n");
    if rng.gen_bool(0.3) {
        cfg.push_str("CONSTRAINT Bound\n");
    }
    (spec, cfg)
}

fn profiler_laws() -> String {
    for (spec, cfg) in BUNDLED_MODELS {
        let r = check(&unit(spec, cfg), &CheckOptions { profile: true, ..Default::default() });
        laws(&format!("{spec} {cfg}"), &r.report);
    }
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let mut states = 0;
    for i in 0..50 {
        let (spec, cfg) = micro_model(&mut rng);
        let u = resolve(
            &parse_module(&spec).unwrap_or_else(|e| panic!("micro {i}: {e}\n{spec}")),
            &parse_config(&cfg).unwrap(),
        )
        .unwrap_or_else(|e| panic!("micro {i}: {e}"));
        let r = check(&u, &CheckOptions { profile: true, check_deadlock: false, ..Default::default() });
        assert!(!matches!(r.report.outcome, Outcome::Error(_)), "micro {i}: {}\n{spec}", r.report.outcome);
        laws(&format!("micro {i}"), &r.report);
        states += r.report.statistics.total_states;
    }
    format!("{} bundled runs and 50 micro-models ({states} states)", BUNDLED_MODELS.len())
}

// ---------------------------------------------------------------- inefficient Simple

fn ratio(r: &CheckReport, action: &str) -> f64 {
    let a = r.statistics.action(action).unwrap();
    a.distinct as f64 / a.total as f64
}

fn counts(r: &CheckReport) -> Vec<(u64, u64)> {
    r.statistics.per_action.iter().map(|a| (a.total, a.distinct)).collect()
}

fn inefficient_simple() -> String {
    let profile = CheckOptions { profile: true, ..Default::default() };
    let u = unit("SimpleInefficient.spec", "SimpleInefficient.cfg");
    let bad = check(&u, &profile).report;
    let fixed = check(&unit("SimpleFixed.spec", "SimpleFixed.cfg"), &profile).report;
    assert_eq!(bad.outcome, Outcome::Ok);
    // golden values, taken from the oracle
    let o = bfs(&Simple { n: 2, variant: Variant::Inefficient });
    assert_eq!(counts(&bad), o.per_action);
    assert_eq!(counts(&bad), [(1, 1), (6, 5), (14, 7), (0, 0)]);
    assert_eq!((bad.statistics.distinct_states, bad.statistics.total_states), (13, 21));
    assert_eq!(counts(&fixed), bfs(&Simple { n: 2, variant: Variant::Fixed }).per_action);
    assert_eq!(fixed.statistics.action("b").map(|a| (a.total, a.distinct)), Some((8, 7)));

    let (ra, rb) = (ratio(&bad, "a"), ratio(&bad, "b"));
    assert!(rb < ra, "(a) b {rb} is not worse than a {ra}");

    let p = bad.profile.as_ref().unwrap();
    let d = u.action("d").unwrap().1;
    let guard: u64 = p.eval.iter().filter(|e| d.range.contains(&e.location)).map(|e| e.invocations).max().unwrap_or(0);
    let stat = p.action("d").unwrap();
    assert!(guard > 0, "(b) d's guard never evaluated");
    assert_eq!((stat.total, stat.distinct), (0, 0));
    assert!(p.never_enabled().iter().any(|n| &**n == "d"), "(b) d not flagged");

    let (fa, fb) = (ratio(&fixed, "a"), ratio(&fixed, "b"));
    assert!((fb - fa).abs() <= 0.1 * fa, "(c) fixed b {fb} vs a {fa}");
    // reference only: at N = 3 the corrected b stays far from a
    let n3 = |spec: &str, cfg: &str| check(&unit_with(&text(spec), &text(cfg).replace("N = 2", "N = 3")), &CheckOptions::default()).report;
    let (i3, f3) = (n3("SimpleInefficient.spec", "SimpleInefficient.cfg"), n3("SimpleFixed.spec", "SimpleFixed.cfg"));
    format!(
        "(a) b {rb:.3} < a {ra:.3}; (b) d guard {guard} evaluations, never enabled; (c) fixed b {fb:.3} vs a {fa:.3}; \
         N=3 reference: b {:?} a {:?}, fixed b {:?} a {:?} (total, distinct)",
        counts(&i3)[2],
        counts(&i3)[1],
        counts(&f3)[2],
        counts(&f3)[1]
    )
}

// ---------------------------------------------------------------- cost

fn subset_cost() -> String {
    let u = unit("Subsets.spec", "Subsets.cfg");
    let size = u.constants.get("S").and_then(|s| s.as_set()).map(<[Value]>::len);
    assert_eq!(size, Some(10));
    let r = check(&u, &CheckOptions { profile: true, ..Default::default() }).report;
    let body = &u.definition("AllSubsets").unwrap().body;
    let cost = r.profile.as_ref().unwrap().eval_at(&body.range).map(|e| e.cost);
    assert_eq!(cost, Some(1024), "quantifier at {}", body.range);
    "SUBSET of 10 elements costs 1024".into()
}

// ---------------------------------------------------------------- trace identity

fn record(s: &State) -> Value {
    Value::record(s.iter().map(|(n, v)| (n.to_string(), v.clone())))
}

fn identity_holds(label: &str, base: Option<&CheckUnit>, t: &ErrorTrace) {
    let x = explore(base, t, &parse_expressions("_TETrace[_TEPosition]").unwrap()).unwrap();
    for (k, step) in t.states.iter().enumerate() {
        assert_eq!(x.values[k][0], Cell::Value(record(&step.state)), "{label} position {}", k + 1);
    }
}

fn synthetic(len: usize, lasso: Option<usize>) -> ErrorTrace {
    let range = SourceRange::parse_tlc("line 1, col 1 to line 1, col 5 of module Syn").unwrap();
    let states = (1..=len)
        .map(|k| TraceStep {
            ordinal: k,
            action: Arc::from(if k == 1 { "Init" } else { "Step" }),
            range: range.clone(),
            state: State::from_bindings([
                ("c", Value::int(k as i64 % 7)),
                ("d", Value::str(if k % 2 == 0 { "even" } else { "odd" })),
                ("e", Value::seq(vec![Value::int(k as i64), Value::Bool(k % 3 == 0)])),
            ]),
        })
        .collect();
    ErrorTrace { states, lasso_back_to: lasso }
}

fn trace_identity() -> String {
    let deadlock_cfg = "CONSTANT N = 2\nINIT Init\nNEXT Next\n";
    let produced = [
        ("SimpleBad", unit("SimpleBad.spec", "SimpleBad.cfg")),
        ("DieHard", unit("DieHard.spec", "DieHard.cfg")),
        ("Simple deadlock", unit_with(&text("Simple.spec"), deadlock_cfg)),
        ("Channel", unit_with(&text("Channel.spec"), "CONSTANT Msgs = {m1, m2}\nCONSTANT Cap = 2\nINIT Init\nNEXT Next\nINVARIANT Bound\n")),
    ];
    let mut traces = 0;
    for (label, u) in &produced {
        let run: CheckRun = check(u, &CheckOptions::default());
        let t = run.report.trace.unwrap_or_else(|| panic!("{label}: no trace ({})", run.report.outcome));
        identity_holds(label, Some(u), &t);
        identity_holds(label, None, &t);
        traces += 1;
    }
    identity_holds("lasso", None, &synthetic(12, Some(4)));

    // odd ordinal, so `d` flips on the back edge too
    let big = synthetic(5000, Some(3999));
    let exprs = parse_expressions("_TETrace[_TEPosition]\nc' - c\nflips == d' # d").unwrap();
    let start = Instant::now();
    let x = explore(None, &big, &exprs).unwrap();
    let took = start.elapsed();
    assert!(took < Duration::from_secs(30), "5000 states took {took:?}");
    for (k, step) in big.states.iter().enumerate() {
        assert_eq!(x.values[k][0], Cell::Value(record(&step.state)));
        assert_eq!(x.values[k][2], Cell::Value(Value::Bool(true)));
    }
    format!("{traces} checker traces and a lasso; 5000 states x 3 expressions in {} ms", took.as_millis())
}

// ---------------------------------------------------------------- cloud

fn scenario(name: &str) -> (SimulatedProvider, tlawb_cloud::scenario::ScenarioRun) {
    let creds = Credentials::new("ak", "sk");
    let sim = SimulatedProvider::new(creds.clone()).with_chunk_size(100);
    let req = CheckRequest { spec: text("Simple.spec").into_bytes(), config: text("Simple.cfg").into_bytes(), seed: 0, workers: 1 };
    let cfg = RunConfig { tag: "acceptance".into(), count: 1, mail: "me@example.org".into() };
    let run = {
        let orch = Orchestrator::new(&sim, creds, DEFAULT_GRACE);
        run_scenario(&sim, &orch, &cfg, &req, &parse_scenario(bundled(name).unwrap()).unwrap())
    };
    (sim, run)
}

fn cloud_lifecycle() -> String {
    let (sim, _) = scenario("reuse");
    let calls = sim.calls();
    let launches = calls.iter().filter(|c| matches!(c, Call::Launch { launched, .. } if !launched.is_empty())).count();
    let provisions = calls.iter().filter(|c| matches!(c, Call::Exec { script, .. } if script == "sh provision.sh")).count();
    assert_eq!((launches, provisions), (1, 1), "(a)");

    let (sim, _) = scenario("mail-failure");
    assert!(sim.calls().iter().all(|c| !matches!(c, Call::Terminate { .. })), "(b) terminate called");
    assert!(sim.now() > DEFAULT_GRACE && sim.describe(1).unwrap().running, "(b) instance gone");

    let mut compared = 0;
    for (spec, cfg) in [("Simple.spec", "Simple.cfg"), ("SimpleBad.spec", "SimpleBad.cfg"), ("SimpleInefficient.spec", "SimpleInefficient.cfg")] {
        for chunk in [1, 7, 256, 1 << 20] {
            let creds = Credentials::new("ak", "sk");
            let sim = SimulatedProvider::new(creds.clone()).with_chunk_size(chunk);
            let orch = Orchestrator::new(&sim, creds, DEFAULT_GRACE);
            let req = CheckRequest { spec: text(spec).into_bytes(), config: text(cfg).into_bytes(), seed: 3, workers: 1 };
            let res = orch.run(&RunConfig { tag: "t".into(), count: 1, mail: "m@x".into() }, &req).result.unwrap();
            assert_eq!(res.live_report().unwrap(), import_mail(&sim.mailbox()[0]).unwrap(), "(c) {spec} chunk {chunk}");
            compared += 1;
        }
    }

    for (name, _) in BUNDLED {
        let (_, run) = scenario(name);
        for r in &run.runs {
            assert!(phases_in_order(&r.handle.phases), "(d) {name}: {:?}", r.handle.phases);
        }
    }
    format!("(a) 1 launch, 1 provision; (b) instance alive past grace; (c) {compared} report pairs equal; (d) {} scenarios in order", BUNDLED.len())
}

// ---------------------------------------------------------------- determinism

fn determinism() -> String {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = 0;
    for (i, (spec, cfg)) in BUNDLED_MODELS.iter().enumerate() {
        for profile in [false, true] {
            let logs: Vec<(Vec<u8>, Vec<u8>)> = ["a", "b"]
                .iter()
                .map(|side| {
                    let out = tmp.path().join(format!("{i}-{profile}-{side}"));
                    let options = CheckOptions { seed: 42, workers: 1, profile, ..Default::default() };
                    check_command(&CheckArgs { spec: models().join(spec), config: models().join(cfg), out: out.clone(), options, full_values: false }).unwrap();
                    (std::fs::read(out.join(LOG_FILE)).unwrap(), std::fs::read(out.join(REPORT_FILE)).unwrap())
                })
                .collect();
            assert!(logs[0] == logs[1], "{spec} {cfg} profile={profile}: run artifacts differ");
            runs += 1;
        }
    }
    format!("{runs} run pairs with byte-identical log.wire and report.txt")
}

// ---------------------------------------------------------------- driver

type Criterion = (&'static str, fn() -> String);

const CRITERIA: [Criterion; 9] = [
    ("value round-trip", value_round_trip),
    ("chunk invariance", chunk_invariance),
    ("checker vs oracle", checker_vs_oracle),
    ("profiler statistics laws", profiler_laws),
    ("inefficient Simple variant", inefficient_simple),
    ("subset quantifier cost", subset_cost),
    ("trace identity", trace_identity),
    ("cloud lifecycle", cloud_lifecycle),
    ("determinism", determinism),
];

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in CRITERIA {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let ms = start.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{ms} ms]"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into());
                println!("FAIL  {name}: {} [{ms} ms]", msg.replace('\n', " | "));
            }
        }
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
