//! Trace exploration: changed-variable diffs and trace expressions.
//!
//! Expressions are compiled into an auxiliary module. The module declares the
//! trace's variables plus a position variable `_TEPos`, receives the trace as
//! the constant `_TETrace` (a sequence of records) and defines `_TEPosition`.
//! Primed variables in an expression are rewritten to fields of the next
//! trace record, so each expression is a plain state predicate of the
//! auxiliary module.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write;
use std::sync::Arc;

use crate::engine::{ErrorTrace, Evaluator};
use crate::kernel::{render_value, State, Value};
use crate::lang::{
    is_identifier, parse_config, parse_expr, parse_module, render_config, render_expr, resolve, CheckUnit, Expr,
    ExprKind, ModelConfig, Scope,
};

pub const TRACE_CONSTANT: &str = "_TETrace";
pub const POSITION: &str = "_TEPosition";
const POS_VAR: &str = "_TEPos";
const SUCC: &str = "_TESucc";
const INIT: &str = "_TEInit";
const NEXT: &str = "_TENext";
const DONE: &str = "_TEDone";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceExpError {
    #[error("expression {index}, line {line}, col {col}: {message}")]
    Expression { index: usize, line: u32, col: u32, message: String },
    #[error("expression name `{0}` is already in use")]
    NameCollision(String),
    #[error("`{0}` is not a valid expression name")]
    InvalidName(String),
    #[error("expression `{expression}` refers to the successor of position {position}, which has none")]
    NoSuccessor { expression: String, position: usize },
    #[error("the trace has no states")]
    EmptyTrace,
    #[error("trace state {ordinal} does not bind the same variables as state 1")]
    RaggedTrace { ordinal: usize },
    #[error("trace module: {0}")]
    Module(String),
}

#[derive(Clone, Debug)]
pub struct TraceExpression {
    pub name: Option<String>,
    pub source: String,
    pub expr: Expr,
    /// References primes directly. Calls of action-level definitions are
    /// taken into account when exploring.
    pub pair_level: bool,
}

impl TraceExpression {
    /// Parses `expr` or `name == expr`. `index` is the 1-based input
    /// position, used in error messages.
    pub fn parse(text: &str, index: usize) -> Result<Self, TraceExpError> {
        let (name, source) = match text.split_once("==") {
            Some((n, rest)) if is_identifier(n.trim()) => (Some(n.trim().to_string()), rest),
            _ => (None, text),
        };
        // keep columns relative to the whole line
        let offset = (text.len() - source.len()) as u32;
        let expr = parse_expr(source, "_TE", 1 << 30).map_err(|e| TraceExpError::Expression {
            index,
            line: e.line,
            col: if e.line == 1 { e.col + offset } else { e.col },
            message: e.message,
        })?;
        let mut pair_level = false;
        expr.walk(&mut |e| pair_level |= matches!(e.kind, ExprKind::Prime(_) | ExprKind::Unchanged(_)));
        Ok(TraceExpression { name, source: source.trim().to_string(), expr, pair_level })
    }
}

/// One expression per non-blank line; lines starting with `\*` are comments.
pub fn parse_expressions(text: &str) -> Result<Vec<TraceExpression>, TraceExpError> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with("\\*"))
        .enumerate()
        .map(|(i, l)| TraceExpression::parse(l, i + 1))
        .collect()
}

/// Display name: the given name, or `expr<k>` by input position.
pub fn display_name(e: &TraceExpression, index: usize) -> String {
    e.name.clone().unwrap_or_else(|| format!("expr{index}"))
}

fn def_name(e: &TraceExpression, index: usize) -> String {
    e.name.clone().unwrap_or_else(|| format!("_TEExpr{index}"))
}

/// Per-state changed-variable sets. State 1 has none.
pub fn diff(trace: &ErrorTrace) -> Vec<BTreeSet<Arc<str>>> {
    let mut out = Vec::with_capacity(trace.len());
    for (i, step) in trace.states.iter().enumerate() {
        let mut changed = BTreeSet::new();
        if i > 0 {
            let prev = &trace.states[i - 1].state;
            for (n, v) in step.state.iter() {
                if prev.get(n) != Some(v) {
                    changed.insert(Arc::from(n));
                }
            }
            for (n, _) in prev.iter() {
                if step.state.get(n).is_none() {
                    changed.insert(Arc::from(n));
                }
            }
        }
        out.push(changed);
    }
    out
}

fn trace_variables(trace: &ErrorTrace, base: Option<&CheckUnit>) -> Result<Vec<Arc<str>>, TraceExpError> {
    let first = trace.states.first().ok_or(TraceExpError::EmptyTrace)?;
    let names: BTreeSet<&str> = first.state.iter().map(|(n, _)| n).collect();
    for s in &trace.states {
        let these: BTreeSet<&str> = s.state.iter().map(|(n, _)| n).collect();
        if these != names {
            return Err(TraceExpError::RaggedTrace { ordinal: s.ordinal });
        }
    }
    Ok(match base {
        Some(u) if u.variables().iter().all(|v| names.contains(&**v)) && u.variables().len() == names.len() => {
            u.variables().to_vec()
        }
        _ => names.into_iter().map(Arc::from).collect(),
    })
}

fn trace_value(trace: &ErrorTrace) -> Value {
    Value::seq(trace.states.iter().map(|s| s.state.to_record()).collect())
}

/// Replaces primed variables with fields of the successor record and
/// `UNCHANGED e` with `e' = e`.
fn rewrite(e: &Expr, vars: &HashSet<&str>, bound: &mut Vec<Arc<str>>, primed: bool) -> Expr {
    let mk = |kind| Expr { id: e.id, range: e.range.clone(), kind };
    match &e.kind {
        ExprKind::Ident(n) if primed && vars.contains(&**n) && !bound.contains(n) => {
            let rec = mk(ExprKind::Apply(
                Box::new(mk(ExprKind::Ident(Arc::from(TRACE_CONSTANT)))),
                vec![mk(ExprKind::Ident(Arc::from(SUCC)))],
            ));
            mk(ExprKind::Field(Box::new(rec), n.clone()))
        }
        ExprKind::Prime(inner) => rewrite(inner, vars, bound, true),
        ExprKind::Unchanged(inner) => {
            let next = rewrite(inner, vars, bound, true);
            let now = rewrite(inner, vars, bound, primed);
            mk(ExprKind::Binary(crate::lang::BinOp::Eq, Box::new(next), Box::new(now)))
        }
        _ => {
            let mut out = e.clone();
            rewrite_children(&mut out, vars, bound, primed);
            out
        }
    }
}

fn rewrite_children(e: &mut Expr, vars: &HashSet<&str>, bound: &mut Vec<Arc<str>>, primed: bool) {
    let go = |x: &mut Expr, bound: &mut Vec<Arc<str>>| *x = rewrite(x, vars, bound, primed);
    use ExprKind::*;
    match &mut e.kind {
        Bool(_) | Int(_) | Str(_) | Ident(_) | At => {}
        Call(_, args) | SetEnum(args) | And(args) | Or(args) | Tuple(args) => args.iter_mut().for_each(|a| go(a, bound)),
        Apply(f, args) => {
            go(f, bound);
            args.iter_mut().for_each(|a| go(a, bound));
        }
        Field(x, _) | Not(x) | Neg(x) | Subset(x) | Union(x) | Domain(x) | Prime(x) | Unchanged(x) => go(x, bound),
        Binary(_, a, b) => {
            go(a, bound);
            go(b, bound);
        }
        Forall(bs, body) | Exists(bs, body) | FnCons(bs, body) | SetMap(body, bs) => {
            let depth = bound.len();
            for b in bs.iter_mut() {
                go(&mut b.domain, bound);
                bound.extend(b.names.iter().cloned());
            }
            go(body, bound);
            bound.truncate(depth);
        }
        Choose(x, d, p) | SetFilter(x, d, p) => {
            go(d, bound);
            bound.push(x.clone());
            go(p, bound);
            bound.pop();
        }
        Except(f, ups) => {
            go(f, bound);
            for (path, rhs) in ups {
                path.iter_mut().for_each(|p| go(p, bound));
                go(rhs, bound);
            }
        }
        Record(fields) => fields.iter_mut().for_each(|(_, x)| go(x, bound)),
        If(c, t, f) => {
            go(c, bound);
            go(t, bound);
            go(f, bound);
        }
    }
}

/// The auxiliary module and configuration for `trace` and `exprs`.
#[derive(Clone, Debug)]
pub struct TraceModule {
    pub module: String,
    pub config: String,
    pub variables: Vec<Arc<str>>,
    /// Definition name of each expression, in input order.
    pub definitions: Vec<String>,
    /// Whether each expression needs a successor state.
    pub pair_level: Vec<bool>,
}

pub fn generate_trace_module(
    base: Option<&CheckUnit>,
    trace: &ErrorTrace,
    exprs: &[TraceExpression],
) -> Result<TraceModule, TraceExpError> {
    let variables = trace_variables(trace, base)?;
    let vars: HashSet<&str> = variables.iter().map(|v| &**v).collect();

    // names visible to expressions, with arities
    let mut arity: HashMap<&str, usize> = HashMap::new();
    if let Some(u) = base {
        for d in &u.module.definitions {
            arity.insert(&d.name, d.params.len());
        }
    }
    for n in [POSITION, SUCC, INIT, NEXT, DONE] {
        arity.insert(n, 0);
    }
    let mut reserved: HashSet<String> = vars.iter().map(|v| v.to_string()).collect();
    reserved.insert(TRACE_CONSTANT.into());
    reserved.insert(POS_VAR.into());
    if let Some(u) = base {
        reserved.extend(u.module.constants.iter().map(|c| c.to_string()));
    }
    let def_names: Vec<String> = exprs.iter().enumerate().map(|(i, e)| def_name(e, i + 1)).collect();
    for (i, e) in exprs.iter().enumerate() {
        if let Some(n) = &e.name {
            if n.starts_with("_TE") {
                return Err(TraceExpError::InvalidName(n.clone()));
            }
            if reserved.contains(n) || arity.contains_key(n.as_str()) || def_names[..i].contains(n) {
                return Err(TraceExpError::NameCollision(n.clone()));
            }
        }
    }

    let mut constants: Vec<Arc<str>> = base.map(|u| u.module.constants.clone()).unwrap_or_default();
    constants.push(Arc::from(TRACE_CONSTANT));
    let mut all_vars = variables.clone();
    all_vars.push(Arc::from(POS_VAR));

    // scope for checking expressions before they are spliced in
    let scaffold = crate::lang::SpecModule {
        name: Arc::from("_TE"),
        constants: constants.clone(),
        variables: variables.clone(),
        definitions: Vec::new(),
        source: Arc::from(""),
        expr_count: 0,
    };
    let mut scope_defs = arity.clone();
    let mut pair_level = Vec::with_capacity(exprs.len());
    let mut named_pair: HashMap<&str, bool> = HashMap::new();
    for (i, e) in exprs.iter().enumerate() {
        Scope { module: &scaffold, defs: &scope_defs }.check(&e.expr, &mut Vec::new()).map_err(|err| {
            TraceExpError::Expression { index: i + 1, line: err.line, col: err.col, message: err.message }
        })?;
        let mut pl = e.pair_level;
        e.expr.walk(&mut |x| {
            if let ExprKind::Ident(n) | ExprKind::Call(n, _) = &x.kind {
                pl |= named_pair.get(&**n).copied().unwrap_or(false) || base.is_some_and(|u| u.is_action_level(n));
            }
        });
        pair_level.push(pl);
        if let Some(n) = &e.name {
            scope_defs.insert(n, 0);
            named_pair.insert(n, pl);
        }
    }

    let module_name = base.map(|u| format!("_TE_{}", u.module.name)).unwrap_or_else(|| "_TE".into());
    let mut m = String::new();
    let _ = writeln!(m, "---- MODULE {module_name} ----");
    let _ = writeln!(m, "CONSTANTS {}", constants.join(", "));
    let _ = writeln!(m, "VARIABLES {}", all_vars.join(", "));
    if let Some(u) = base {
        for d in &u.module.definitions {
            m.push_str(&d.name);
            if !d.params.is_empty() {
                let _ = write!(m, "({})", d.params.join(", "));
            }
            let _ = writeln!(m, " == {}", render_expr(&d.body));
        }
    }
    let back = trace.lasso_back_to.unwrap_or(0);
    let _ = writeln!(m, "{POSITION} == {POS_VAR}");
    let _ = writeln!(m, "{SUCC} == IF {POS_VAR} < Len({TRACE_CONSTANT}) THEN {POS_VAR} + 1 ELSE {back}");
    let _ = write!(m, "{INIT} == {POS_VAR} = 1");
    for v in &variables {
        let _ = write!(m, " /\\ {v} = {TRACE_CONSTANT}[1].{v}");
    }
    m.push('\n');
    let guard = if trace.lasso_back_to.is_some() { "TRUE".to_string() } else { format!("{POS_VAR} < Len({TRACE_CONSTANT})") };
    let _ = write!(m, "{NEXT} == {guard} /\\ {POS_VAR}' = {SUCC}");
    for v in &variables {
        let _ = write!(m, " /\\ {v}' = {TRACE_CONSTANT}[{SUCC}].{v}");
    }
    m.push('\n');
    let _ = writeln!(m, "{DONE} == {POS_VAR} = Len({TRACE_CONSTANT})");
    for (e, name) in exprs.iter().zip(&def_names) {
        let body = rewrite(&e.expr, &vars, &mut Vec::new(), false);
        let _ = writeln!(m, "{name} == {}", render_expr(&body));
    }
    m.push_str("====\n");

    let mut cfg = ModelConfig::default();
    if let Some(u) = base {
        let mut cs: Vec<(Arc<str>, Value)> = u.constants.iter().map(|(n, v)| (n.clone(), v.clone())).collect();
        cs.sort();
        cfg.constants = cs;
    }
    cfg.constants.push((Arc::from(TRACE_CONSTANT), trace_value(trace)));
    cfg.init = Some(Arc::from(INIT));
    cfg.next = Some(Arc::from(NEXT));
    if trace.lasso_back_to.is_none() {
        cfg.terminal = Some(Arc::from(DONE));
    }
    Ok(TraceModule { module: m, config: render_config(&cfg), variables, definitions: def_names, pair_level })
}

impl TraceModule {
    /// Parses and resolves the generated text.
    pub fn unit(&self) -> Result<CheckUnit, TraceExpError> {
        let module = parse_module(&self.module).map_err(|e| TraceExpError::Module(e.to_string()))?;
        let config = parse_config(&self.config).map_err(|e| TraceExpError::Module(e.to_string()))?;
        resolve(&module, &config).map_err(|e| TraceExpError::Module(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cell {
    Value(Value),
    /// A pair-level expression at the last state of a trace without lasso.
    NoSuccessor,
    Error(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Value(v) => f.write_str(&render_value(v)),
            Cell::NoSuccessor => f.write_str("<no successor>"),
            Cell::Error(m) => write!(f, "<error: {m}>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpressionColumn {
    pub name: String,
    pub source: String,
    pub pair_level: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExploredTrace {
    pub trace: ErrorTrace,
    pub variables: Vec<Arc<str>>,
    pub expressions: Vec<ExpressionColumn>,
    /// `values[k][j]`: expression `j` at position `k + 1`.
    pub values: Vec<Vec<Cell>>,
    pub changed: Vec<BTreeSet<Arc<str>>>,
}

impl ExploredTrace {
    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.expressions.iter().position(|e| e.name == name)?;
        Some(self.values.iter().map(|row| &row[j]).collect())
    }

    /// Text listing: each state header, expression values, then variables
    /// with `*` marking changed ones.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, step) in self.trace.states.iter().enumerate() {
            let _ = writeln!(s, "{}: <{} {}>", step.ordinal, step.action, step.range);
            for (e, cell) in self.expressions.iter().zip(&self.values[k]) {
                let _ = writeln!(s, "  {} = {cell}", e.name);
            }
            for v in &self.variables {
                if let Some(val) = step.state.get(v) {
                    let mark = if self.changed[k].contains(v) { "*" } else { " " };
                    let _ = writeln!(s, "{mark} {v} = {}", render_value(val));
                }
            }
        }
        if let Some(b) = self.trace.lasso_back_to {
            let _ = writeln!(s, "Back to state {b}");
        }
        s
    }
}

fn aux_state(step: &State, pos: usize) -> State {
    State::from_bindings(step.iter().map(|(n, v)| (n.to_string(), v.clone())).chain([(POS_VAR.to_string(), Value::int(pos))]))
}

/// Evaluates every expression at every position of `trace`.
pub fn explore(base: Option<&CheckUnit>, trace: &ErrorTrace, exprs: &[TraceExpression]) -> Result<ExploredTrace, TraceExpError> {
    let tm = generate_trace_module(base, trace, exprs)?;
    let unit = tm.unit()?;
    let defs: Vec<&Expr> = tm
        .definitions
        .iter()
        .map(|n| unit.definition(n).map(|d| &d.body).ok_or_else(|| TraceExpError::Module(format!("missing definition {n}"))))
        .collect::<Result<_, _>>()?;
    let states: Vec<State> = trace.states.iter().enumerate().map(|(i, s)| aux_state(&s.state, i + 1)).collect();
    let mut ev = Evaluator::new(&unit, false);
    let n = states.len();
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let succ = if k + 1 < n { Some(k + 1) } else { trace.lasso_back_to.map(|b| b - 1) };
        let row = defs
            .iter()
            .zip(&tm.pair_level)
            .map(|(body, &pl)| {
                if pl && succ.is_none() {
                    return Cell::NoSuccessor;
                }
                match ev.evaluate(body, Some(&states[k]), succ.map(|j| &states[j])) {
                    Ok(v) => Cell::Value(v),
                    Err(e) => Cell::Error(e.to_string()),
                }
            })
            .collect();
        values.push(row);
    }
    let expressions = exprs
        .iter()
        .enumerate()
        .zip(&tm.pair_level)
        .map(|((i, e), &pl)| ExpressionColumn { name: display_name(e, i + 1), source: e.source.clone(), pair_level: pl })
        .collect();
    Ok(ExploredTrace { trace: trace.clone(), variables: tm.variables, expressions, values, changed: diff(trace) })
}

/// Evaluates one expression at one 1-based position, failing where
/// [`explore`] would produce a marker cell.
pub fn evaluate_at(
    base: Option<&CheckUnit>,
    trace: &ErrorTrace,
    exprs: &[TraceExpression],
    index: usize,
    position: usize,
) -> Result<Value, TraceExpError> {
    let explored = explore(base, trace, exprs)?;
    let name = &explored.expressions[index].name;
    match &explored.values[position - 1][index] {
        Cell::Value(v) => Ok(v.clone()),
        Cell::NoSuccessor => Err(TraceExpError::NoSuccessor { expression: name.clone(), position }),
        Cell::Error(m) => Err(TraceExpError::Module(format!("`{name}` at position {position}: {m}"))),
    }
}
