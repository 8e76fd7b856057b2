//! Expression evaluation and state enumeration.
//!
//! One [`Evaluator`] is owned by each worker. Definitions are expanded in
//! place (call-by-value on arguments); each named definition entered
//! extends the current call chain so the profiler can attribute counts to
//! it.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive};

use crate::kernel::{State, Value};
use crate::lang::{BinOp, Binding, CheckUnit, Definition, Expr, ExprKind, SourceRange};
use crate::profiler::{ProfileSink, ROOT_CHAIN};

/// Largest set SUBSET or `[S -> T]` will materialize.
const MAX_GENERATED: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct EvalError {
    pub message: String,
    pub range: Option<SourceRange>,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.range {
            Some(r) => write!(f, "{} ({r})", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl EvalError {
    pub fn new(message: impl Into<String>) -> Self {
        EvalError { message: message.into(), range: None }
    }

    fn at(e: &Expr, message: impl Into<String>) -> Self {
        EvalError { message: message.into(), range: Some(e.range.clone()) }
    }
}

pub type EvalResult<T> = Result<T, EvalError>;

type Cont<'c, 'u> = &'c mut dyn FnMut(&mut Evaluator<'u>) -> EvalResult<()>;

#[derive(Copy, Clone, PartialEq, Eq)]
enum Flow {
    Continue,
    Stop,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
enum Mode {
    /// Equalities and memberships on unassigned unprimed variables assign.
    Init,
    /// Equalities and memberships on unassigned primed variables assign.
    Next,
}

pub struct Evaluator<'u> {
    unit: &'u CheckUnit,
    sink: Option<ProfileSink>,
    chain: u32,
    locals: Vec<(Arc<str>, Value)>,
    /// Locals below this index belong to callers and are not visible.
    frame: usize,
    at: Vec<Value>,
    cur: Vec<Option<Value>>,
    next: Vec<Option<Value>>,
    primed: bool,
    mode: Mode,
    action: Arc<str>,
}

impl<'u> Evaluator<'u> {
    pub fn new(unit: &'u CheckUnit, profile: bool) -> Self {
        let n = unit.sorted_vars.len();
        Evaluator {
            unit,
            sink: profile.then(ProfileSink::new),
            chain: ROOT_CHAIN,
            locals: Vec::new(),
            frame: 0,
            at: Vec::new(),
            cur: vec![None; n],
            next: vec![None; n],
            primed: false,
            mode: Mode::Next,
            action: Arc::from("Init"),
        }
    }

    pub fn unit(&self) -> &'u CheckUnit {
        self.unit
    }

    pub fn profile(&self) -> Option<&ProfileSink> {
        self.sink.as_ref()
    }

    pub fn profile_mut(&mut self) -> Option<&mut ProfileSink> {
        self.sink.as_mut()
    }

    pub fn take_profile(&mut self) -> Option<ProfileSink> {
        self.sink.take()
    }

    fn reset(&mut self) {
        self.chain = ROOT_CHAIN;
        self.locals.clear();
        self.frame = 0;
        self.at.clear();
        self.primed = false;
    }

    fn load(&mut self, s: &State) {
        for (i, slot) in self.cur.iter_mut().enumerate() {
            *slot = Some(s.slot(i).clone());
        }
    }

    fn load_next(&mut self, t: Option<&State>) {
        for (i, slot) in self.next.iter_mut().enumerate() {
            *slot = t.map(|t| t.slot(i).clone());
        }
    }

    fn build(&self, slots: &[Option<Value>], what: &str) -> EvalResult<State> {
        let mut values = Vec::with_capacity(slots.len());
        for (i, v) in slots.iter().enumerate() {
            match v {
                Some(v) => values.push(v.clone()),
                None => {
                    return Err(EvalError::new(format!(
                        "{what} does not determine the value of variable `{}`",
                        self.unit.sorted_vars[i]
                    )))
                }
            }
        }
        Ok(State::from_slots(&self.unit.sorted_vars, values))
    }

    /// Every state satisfying the Init predicate, in generation order,
    /// duplicates included.
    pub fn initial_states(&mut self) -> EvalResult<Vec<State>> {
        self.reset();
        self.mode = Mode::Init;
        self.action = Arc::from("Init");
        self.cur.iter_mut().for_each(|s| *s = None);
        self.load_next(None);
        let body: &'u Expr = &self.unit.actions[0].body;
        let mut out = Vec::new();
        self.enumerate(body, &mut |ev: &mut Evaluator<'u>| {
            out.push(ev.build(&ev.cur, "Init")?);
            Ok(())
        })?;
        self.mode = Mode::Next;
        Ok(out)
    }

    /// Successor states of `s` through one action (index into the unit's
    /// action table, never 0), for every binding of its parameters.
    pub fn action_successors(&mut self, action: usize, s: &State) -> EvalResult<Vec<State>> {
        let a = &self.unit.actions[action];
        self.reset();
        self.mode = Mode::Next;
        self.action = a.name.clone();
        self.load(s);
        self.load_next(None);
        let mut out = Vec::new();
        let owner: &'u Expr = &a.body;
        let params: &'u [Binding] = &a.params;
        let body: &'u Expr = &a.body;
        let name = a.name.clone();
        self.for_each_binding(params, owner, false, &mut |ev| {
            ev.enumerate(body, &mut |ev: &mut Evaluator<'u>| {
                out.push(ev.build(&ev.next, &format!("action `{name}`"))?);
                Ok(())
            })?;
            Ok(Flow::Continue)
        })?;
        Ok(out)
    }

    /// Successors of `s` through every action, tagged with the action index.
    pub fn successors(&mut self, s: &State) -> EvalResult<Vec<(usize, State)>> {
        let mut out = Vec::new();
        for i in 1..self.unit.actions.len() {
            for t in self.action_successors(i, s)? {
                out.push((i, t));
            }
        }
        Ok(out)
    }

    /// Value of a nullary state-level definition in `s`.
    pub fn holds(&mut self, def: &str, s: &State) -> EvalResult<bool> {
        self.holds_on_step(def, s, None)
    }

    /// Value of a nullary definition on the step `s -> t`.
    pub fn holds_on_step(&mut self, def: &str, s: &State, t: Option<&State>) -> EvalResult<bool> {
        let unit = self.unit;
        let d = unit.definition(def).ok_or_else(|| EvalError::new(format!("`{def}` is not defined")))?;
        self.reset();
        self.mode = Mode::Next;
        self.load(s);
        self.load_next(t);
        // configured roots are not part of any call chain
        self.eval_bool(&d.body)
    }

    /// Evaluates `e` in state `s` (and successor `t` for primes).
    pub fn evaluate(&mut self, e: &'u Expr, s: Option<&State>, t: Option<&State>) -> EvalResult<Value> {
        self.reset();
        self.mode = Mode::Next;
        match s {
            Some(s) => self.load(s),
            None => self.cur.iter_mut().for_each(|v| *v = None),
        }
        self.load_next(t);
        self.eval(e)
    }

    #[inline]
    fn hit(&mut self, e: &Expr) {
        if let Some(sink) = &mut self.sink {
            sink.invocation(self.chain, e.id);
        }
    }

    #[inline]
    fn charge(&mut self, e: &Expr, amount: u64) {
        if let Some(sink) = &mut self.sink {
            sink.cost(self.chain, e.id, amount);
        }
    }

    fn enter<T>(&mut self, d: &'u Definition, args: Vec<Value>, f: impl FnOnce(&mut Self, &'u Expr) -> EvalResult<T>) -> EvalResult<T> {
        let saved_chain = self.chain;
        let saved_frame = self.frame;
        let saved_len = self.locals.len();
        if let Some(sink) = &mut self.sink {
            self.chain = sink.child_chain(saved_chain, &d.name);
        }
        self.frame = saved_len;
        for (p, v) in d.params.iter().zip(args) {
            self.locals.push((p.clone(), v));
        }
        let r = f(self, &d.body);
        self.locals.truncate(saved_len);
        self.frame = saved_frame;
        self.chain = saved_chain;
        r
    }

    fn local(&self, name: &str) -> Option<&Value> {
        self.locals[self.frame..].iter().rev().find(|(n, _)| &**n == name).map(|(_, v)| v)
    }

    fn var_slot(&self, name: &str) -> Option<usize> {
        if self.local(name).is_some() {
            return None;
        }
        self.unit.var_slot.get(name).copied()
    }

    /// The definition an identifier or call refers to, unless shadowed.
    fn def_of(&self, name: &str) -> Option<&'u Definition> {
        if self.local(name).is_some() {
            return None;
        }
        let unit: &'u CheckUnit = self.unit;
        unit.def_index.get(name).map(|&i| unit.def_at(i))
    }

    /// Slot an equality or membership on `lhs` may assign in the current
    /// mode.
    fn assignable(&self, lhs: &Expr) -> Option<usize> {
        match (&lhs.kind, self.mode) {
            (ExprKind::Ident(n), Mode::Init) => self.var_slot(n),
            (ExprKind::Prime(inner), Mode::Next) => match &inner.kind {
                ExprKind::Ident(n) => self.var_slot(n),
                _ => None,
            },
            _ => None,
        }
    }

    fn target(&mut self) -> &mut Vec<Option<Value>> {
        match self.mode {
            Mode::Init => &mut self.cur,
            Mode::Next => &mut self.next,
        }
    }

    /// Calls `k` once per assignment of the unassigned variables that makes
    /// `e` true.
    fn enumerate(&mut self, e: &'u Expr, k: Cont<'_, 'u>) -> EvalResult<()> {
        self.hit(e);
        match &e.kind {
            ExprKind::And(items) => self.enum_conj(items, k),
            ExprKind::Or(items) => {
                for it in items {
                    self.enumerate(it, k)?;
                }
                Ok(())
            }
            ExprKind::Exists(bs, body) => {
                self.for_each_binding(bs, e, true, &mut |ev| {
                    ev.enumerate(body, k)?;
                    Ok(Flow::Continue)
                })?;
                Ok(())
            }
            ExprKind::If(c, t, f) => {
                let b = self.eval_bool(c)?;
                self.enumerate(if b { t } else { f }, k)
            }
            ExprKind::Ident(n) if self.def_of(n).is_some() => {
                let d = self.def_of(n).unwrap();
                self.enter(d, Vec::new(), |ev, body| ev.enumerate(body, k))
            }
            ExprKind::Call(n, args) if self.def_of(n).is_some() => {
                let d = self.def_of(n).unwrap();
                let vals = args.iter().map(|a| self.eval(a)).collect::<EvalResult<Vec<_>>>()?;
                self.enter(d, vals, |ev, body| ev.enumerate(body, k))
            }
            ExprKind::Binary(BinOp::Eq, lhs, rhs) if self.assignable(lhs).is_some() => {
                let slot = self.assignable(lhs).unwrap();
                match self.target()[slot].clone() {
                    None => {
                        let v = self.eval(rhs)?;
                        self.assign_then(slot, v, k)
                    }
                    Some(cur) => {
                        if self.eval(rhs)? == cur {
                            k(self)
                        } else {
                            Ok(())
                        }
                    }
                }
            }
            ExprKind::Binary(BinOp::In, lhs, rhs) if self.assignable(lhs).is_some() => {
                let slot = self.assignable(lhs).unwrap();
                match self.target()[slot].clone() {
                    None => {
                        let set = self.eval(rhs)?;
                        let elems = self.set_elems(&set, rhs)?;
                        for v in elems.iter() {
                            self.charge(e, 1);
                            self.assign_then(slot, v.clone(), k)?;
                        }
                        Ok(())
                    }
                    Some(cur) => {
                        if self.member(&cur, rhs)? {
                            k(self)
                        } else {
                            Ok(())
                        }
                    }
                }
            }
            ExprKind::Unchanged(inner) if self.mode == Mode::Next => match self.unchanged_slots(inner) {
                Some(slots) => self.enum_unchanged(&slots, k),
                None => {
                    if self.eval_unchanged(inner)? {
                        k(self)
                    } else {
                        Ok(())
                    }
                }
            },
            _ => {
                let v = self.eval_kind(e)?;
                match v {
                    Value::Bool(true) => k(self),
                    Value::Bool(false) => Ok(()),
                    other => Err(EvalError::at(e, format!("expected a boolean, found {}", other.kind_name()))),
                }
            }
        }
    }

    fn enum_conj(&mut self, items: &'u [Expr], k: Cont<'_, 'u>) -> EvalResult<()> {
        match items.split_first() {
            None => k(self),
            Some((first, rest)) => self.enumerate(first, &mut |ev: &mut Evaluator<'u>| ev.enum_conj(rest, k)),
        }
    }

    fn assign_then(&mut self, slot: usize, v: Value, k: Cont<'_, 'u>) -> EvalResult<()> {
        self.target()[slot] = Some(v);
        let r = k(self);
        self.target()[slot] = None;
        r
    }

    fn enum_unchanged(&mut self, slots: &[usize], k: Cont<'_, 'u>) -> EvalResult<()> {
        let mut assigned = Vec::new();
        let mut ok = true;
        for &s in slots {
            let cur = self.cur[s].clone();
            match &self.next[s] {
                None => {
                    self.next[s] = cur;
                    assigned.push(s);
                }
                Some(v) => {
                    if Some(v) != cur.as_ref() {
                        ok = false;
                        break;
                    }
                }
            }
        }
        let r = if ok { k(self) } else { Ok(()) };
        for s in assigned {
            self.next[s] = None;
        }
        r
    }

    /// Variable slots named by an UNCHANGED argument built from variables,
    /// tuples and nullary definitions.
    fn unchanged_slots(&self, e: &Expr) -> Option<Vec<usize>> {
        match &e.kind {
            ExprKind::Ident(n) => {
                if let Some(s) = self.var_slot(n) {
                    return Some(vec![s]);
                }
                let d = self.def_of(n)?;
                if d.params.is_empty() {
                    // the nested body sees no caller locals
                    let mut out = Vec::new();
                    collect_var_tuple(&d.body, self.unit, &mut out).then_some(out)
                } else {
                    None
                }
            }
            ExprKind::Tuple(items) => {
                let mut out = Vec::new();
                for it in items {
                    out.extend(self.unchanged_slots(it)?);
                }
                Some(out)
            }
            _ => None,
        }
    }

    fn eval_unchanged(&mut self, inner: &'u Expr) -> EvalResult<bool> {
        let was = self.primed;
        self.primed = true;
        let after = self.eval(inner);
        self.primed = was;
        let before = self.eval(inner)?;
        Ok(after? == before)
    }

    /// Enumerates the bindings of a binder, charging one cost unit per
    /// tuple yielded to `owner`.
    fn for_each_binding(
        &mut self,
        bs: &'u [Binding],
        owner: &Expr,
        charge: bool,
        f: &mut dyn FnMut(&mut Evaluator<'u>) -> EvalResult<Flow>,
    ) -> EvalResult<Flow> {
        let mut names: Vec<(Arc<str>, usize)> = Vec::new();
        let mut domains: Vec<Arc<[Value]>> = Vec::new();
        for b in bs {
            let d = self.eval(&b.domain)?;
            let elems = self.set_elems(&d, &b.domain)?;
            for n in &b.names {
                names.push((n.clone(), domains.len()));
                domains.push(elems.clone());
            }
        }
        if domains.iter().any(|d| d.is_empty()) {
            return Ok(Flow::Continue);
        }
        let base = self.locals.len();
        for (n, i) in &names {
            self.locals.push((n.clone(), domains[*i][0].clone()));
        }
        let mut idx = vec![0usize; names.len()];
        let result = loop {
            if charge {
                self.charge(owner, 1);
            }
            match f(self) {
                Ok(Flow::Continue) => {}
                other => break other,
            }
            // odometer, rightmost binding fastest
            let mut pos = names.len();
            let done = loop {
                if pos == 0 {
                    break true;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < domains[pos].len() {
                    self.locals[base + pos].1 = domains[pos][idx[pos]].clone();
                    break false;
                }
                idx[pos] = 0;
                self.locals[base + pos].1 = domains[pos][0].clone();
            };
            if done {
                break Ok(Flow::Continue);
            }
        };
        self.locals.truncate(base);
        result
    }

    fn set_elems(&self, v: &Value, e: &Expr) -> EvalResult<Arc<[Value]>> {
        match v {
            Value::Set(s) => Ok(s.clone()),
            other => Err(EvalError::at(e, format!("expected a set, found {} {other}", other.kind_name()))),
        }
    }

    fn eval_bool(&mut self, e: &'u Expr) -> EvalResult<bool> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::at(e, format!("expected a boolean, found {} {other}", other.kind_name()))),
        }
    }

    fn eval_int(&mut self, e: &'u Expr) -> EvalResult<BigInt> {
        match self.eval(e)? {
            Value::Int(n) => Ok(n),
            other => Err(EvalError::at(e, format!("expected an integer, found {} {other}", other.kind_name()))),
        }
    }

    fn eval_set(&mut self, e: &'u Expr) -> EvalResult<Arc<[Value]>> {
        let v = self.eval(e)?;
        self.set_elems(&v, e)
    }

    pub(crate) fn eval(&mut self, e: &'u Expr) -> EvalResult<Value> {
        self.hit(e);
        self.eval_kind(e)
    }

    fn eval_kind(&mut self, e: &'u Expr) -> EvalResult<Value> {
        use ExprKind::*;
        Ok(match &e.kind {
            Bool(b) => Value::Bool(*b),
            Int(n) => Value::Int(n.clone()),
            Str(s) => Value::Str(s.clone()),
            Ident(n) => return self.ident(e, n),
            Call(n, args) => {
                if let Some(d) = self.def_of(n) {
                    let vals = args.iter().map(|a| self.eval(a)).collect::<EvalResult<Vec<_>>>()?;
                    return self.enter(d, vals, |ev, body| ev.eval(body));
                }
                return self.builtin(e, n, args);
            }
            Apply(f, args) => {
                let fv = self.eval(f)?;
                let arg = if args.len() == 1 {
                    self.eval(&args[0])?
                } else {
                    Value::seq(args.iter().map(|a| self.eval(a)).collect::<EvalResult<_>>()?)
                };
                match fv.apply(&arg) {
                    Some(v) => v.clone(),
                    None => {
                        return Err(EvalError::at(e, format!("cannot apply {fv} to {arg}: argument outside the domain")))
                    }
                }
            }
            Field(r, name) => {
                let rv = self.eval(r)?;
                match rv.apply(&Value::Str(name.clone())) {
                    Some(v) => v.clone(),
                    None => return Err(EvalError::at(e, format!("record {rv} has no field `{name}`"))),
                }
            }
            Binary(op, a, b) => return self.binary(e, *op, a, b),
            Not(a) => Value::Bool(!self.eval_bool(a)?),
            Neg(a) => Value::Int(-self.eval_int(a)?),
            And(items) => {
                for it in items {
                    if !self.eval_bool(it)? {
                        return Ok(Value::Bool(false));
                    }
                }
                Value::Bool(true)
            }
            Or(items) => {
                for it in items {
                    if self.eval_bool(it)? {
                        return Ok(Value::Bool(true));
                    }
                }
                Value::Bool(false)
            }
            Forall(bs, body) | Exists(bs, body) => {
                let want = matches!(e.kind, Exists(..));
                let mut found = false;
                self.for_each_binding(bs, e, true, &mut |ev| {
                    if ev.eval_bool(body)? == want {
                        found = true;
                        Ok(Flow::Stop)
                    } else {
                        Ok(Flow::Continue)
                    }
                })?;
                Value::Bool(if want { found } else { !found })
            }
            Choose(x, d, p) => {
                let elems = self.eval_set(d)?;
                let base = self.locals.len();
                let mut chosen = None;
                for v in elems.iter() {
                    self.charge(e, 1);
                    self.locals.push((x.clone(), v.clone()));
                    let ok = self.eval_bool(p);
                    self.locals.truncate(base);
                    if ok? {
                        chosen = Some(v.clone());
                        break;
                    }
                }
                match chosen {
                    Some(v) => v,
                    None => return Err(EvalError::at(e, "CHOOSE found no element satisfying the predicate")),
                }
            }
            SetEnum(items) => Value::set_from(items.iter().map(|i| self.eval(i)).collect::<EvalResult<Vec<_>>>()?),
            SetFilter(x, d, p) => {
                let elems = self.eval_set(d)?;
                let base = self.locals.len();
                let mut out = Vec::new();
                for v in elems.iter() {
                    self.charge(e, 1);
                    self.locals.push((x.clone(), v.clone()));
                    let ok = self.eval_bool(p);
                    self.locals.truncate(base);
                    if ok? {
                        out.push(v.clone());
                    }
                }
                Value::set_sorted(out)
            }
            SetMap(body, bs) => {
                let mut out = Vec::new();
                self.for_each_binding(bs, e, true, &mut |ev| {
                    out.push(ev.eval(body)?);
                    Ok(Flow::Continue)
                })?;
                Value::set_from(out)
            }
            Subset(a) => {
                let elems = self.eval_set(a)?;
                powerset(&elems).ok_or_else(|| EvalError::at(e, format!("SUBSET of a {}-element set is too large", elems.len())))?
            }
            Union(a) => {
                let sets = self.eval_set(a)?;
                let mut out = Vec::new();
                for s in sets.iter() {
                    out.extend(self.set_elems(s, a)?.iter().cloned());
                }
                Value::set_from(out)
            }
            Domain(a) => match self.eval(a)? {
                Value::Fn(pairs) => Value::set_sorted(pairs.iter().map(|(k, _)| k.clone()).collect()),
                Value::Seq(items) => Value::set_sorted((1..=items.len()).map(|i| Value::int(i as u64)).collect()),
                other => return Err(EvalError::at(e, format!("DOMAIN of {} {other}", other.kind_name()))),
            },
            FnCons(bs, body) => {
                let mut pairs = Vec::new();
                let single = bs.len() == 1 && bs[0].names.len() == 1;
                let mut keys: Vec<Arc<str>> = Vec::new();
                for b in bs.iter() {
                    keys.extend(b.names.iter().cloned());
                }
                self.for_each_binding(bs, e, true, &mut |ev| {
                    let n = ev.locals.len();
                    let key = if single {
                        ev.locals[n - 1].1.clone()
                    } else {
                        Value::seq(ev.locals[n - keys.len()..].iter().map(|(_, v)| v.clone()).collect())
                    };
                    pairs.push((key, ev.eval(body)?));
                    Ok(Flow::Continue)
                })?;
                Value::fn_from(pairs)
            }
            Except(f, ups) => {
                let mut fv = self.eval(f)?;
                for (path, rhs) in ups {
                    let keys = path.iter().map(|k| self.eval(k)).collect::<EvalResult<Vec<_>>>()?;
                    fv = self.update(e, &fv, &keys, rhs)?;
                }
                fv
            }
            At => match self.at.last() {
                Some(v) => v.clone(),
                None => return Err(EvalError::at(e, "`@` outside an EXCEPT")),
            },
            Record(fields) => {
                let mut pairs = Vec::with_capacity(fields.len());
                for (n, x) in fields {
                    pairs.push((Value::Str(n.clone()), self.eval(x)?));
                }
                Value::fn_from(pairs)
            }
            Tuple(items) => Value::seq(items.iter().map(|i| self.eval(i)).collect::<EvalResult<_>>()?),
            If(c, t, f) => {
                if self.eval_bool(c)? {
                    self.eval(t)?
                } else {
                    self.eval(f)?
                }
            }
            Prime(a) => {
                let was = self.primed;
                self.primed = true;
                let r = self.eval(a);
                self.primed = was;
                r?
            }
            Unchanged(a) => Value::Bool(self.eval_unchanged(a)?),
        })
    }

    fn update(&mut self, e: &'u Expr, f: &Value, keys: &[Value], rhs: &'u Expr) -> EvalResult<Value> {
        let Some((k, rest)) = keys.split_first() else {
            self.at.push(f.clone());
            let r = self.eval(rhs);
            self.at.pop();
            return r;
        };
        let Some(old) = f.apply(k) else {
            return Err(EvalError::at(e, format!("EXCEPT key {k} is outside the domain of {f}")));
        };
        let new = self.update(e, &old.clone(), rest, rhs)?;
        Ok(match f {
            Value::Fn(pairs) => {
                let mut pairs = pairs.to_vec();
                let i = pairs.binary_search_by(|(d, _)| d.cmp(k)).expect("key checked above");
                pairs[i].1 = new;
                Value::Fn(pairs.into())
            }
            Value::Seq(items) => {
                let mut items = items.to_vec();
                let i = k.as_int().and_then(|n| n.to_usize()).expect("index checked above");
                items[i - 1] = new;
                Value::Seq(items.into())
            }
            _ => unreachable!("apply succeeded only on functions and sequences"),
        })
    }

    fn ident(&mut self, e: &'u Expr, n: &Arc<str>) -> EvalResult<Value> {
        if let Some(v) = self.local(n) {
            return Ok(v.clone());
        }
        if let Some(&slot) = self.unit.var_slot.get(n) {
            let (vals, what) = if self.primed { (&self.next, "'") } else { (&self.cur, "") };
            return match &vals[slot] {
                Some(v) => Ok(v.clone()),
                None if self.primed => Err(EvalError::at(
                    e,
                    format!("`{n}{what}` is read before action `{}` determines it", self.action),
                )),
                None if self.mode == Mode::Init => {
                    Err(EvalError::at(e, format!("`{n}` is read before Init determines it")))
                }
                None => Err(EvalError::at(e, format!("variable `{n}` has no value here"))),
            };
        }
        if let Some(v) = self.unit.constants.get(n) {
            return Ok(v.clone());
        }
        if let Some(d) = self.def_of(n) {
            return self.enter(d, Vec::new(), |ev, body| ev.eval(body));
        }
        if &**n == "BOOLEAN" {
            return Ok(Value::set_sorted(vec![Value::Bool(false), Value::Bool(true)]));
        }
        Err(EvalError::at(e, format!("unknown identifier `{n}`")))
    }

    fn member(&mut self, v: &Value, set: &'u Expr) -> EvalResult<bool> {
        // membership in generated sets is decided without building them
        match &set.kind {
            ExprKind::Subset(inner) => {
                self.hit(set);
                let base = self.eval_set(inner)?;
                Ok(match v {
                    Value::Set(s) => s.iter().all(|x| base.binary_search(x).is_ok()),
                    _ => false,
                })
            }
            ExprKind::Binary(BinOp::FnSet, dom, cod) => {
                self.hit(set);
                let d = self.eval_set(dom)?;
                let c = self.eval_set(cod)?;
                Ok(match v {
                    Value::Fn(pairs) => {
                        pairs.len() == d.len()
                            && pairs.iter().zip(d.iter()).all(|((k, x), dk)| k == dk && c.binary_search(x).is_ok())
                    }
                    Value::Seq(items) => {
                        items.len() == d.len()
                            && d.iter().enumerate().all(|(i, dk)| *dk == Value::int(i as u64 + 1))
                            && items.iter().all(|x| c.binary_search(x).is_ok())
                    }
                    _ => false,
                })
            }
            _ => {
                let s = self.eval_set(set)?;
                Ok(s.binary_search(v).is_ok())
            }
        }
    }

    fn binary(&mut self, e: &'u Expr, op: BinOp, a: &'u Expr, b: &'u Expr) -> EvalResult<Value> {
        use BinOp::*;
        Ok(match op {
            Implies => Value::Bool(!self.eval_bool(a)? || self.eval_bool(b)?),
            Equiv => Value::Bool(self.eval_bool(a)? == self.eval_bool(b)?),
            Eq => Value::Bool(self.eval(a)? == self.eval(b)?),
            Neq => Value::Bool(self.eval(a)? != self.eval(b)?),
            In | NotIn => {
                let v = self.eval(a)?;
                let m = self.member(&v, b)?;
                Value::Bool(m == (op == In))
            }
            Lt | Le | Gt | Ge => {
                let (x, y) = (self.eval_int(a)?, self.eval_int(b)?);
                Value::Bool(match op {
                    Lt => x < y,
                    Le => x <= y,
                    Gt => x > y,
                    _ => x >= y,
                })
            }
            Add => Value::Int(self.eval_int(a)? + self.eval_int(b)?),
            Sub => Value::Int(self.eval_int(a)? - self.eval_int(b)?),
            Mul => Value::Int(self.eval_int(a)? * self.eval_int(b)?),
            Div | Mod => {
                let (x, y) = (self.eval_int(a)?, self.eval_int(b)?);
                if !y.is_positive() {
                    return Err(EvalError::at(e, format!("divisor {y} must be positive")));
                }
                let r = ((&x % &y) + &y) % &y;
                if op == Mod {
                    Value::Int(r)
                } else {
                    Value::Int((x - r) / y)
                }
            }
            Range => {
                let (lo, hi) = (self.eval_int(a)?, self.eval_int(b)?);
                let mut out = Vec::new();
                let mut i = lo;
                while i <= hi {
                    out.push(Value::Int(i.clone()));
                    i += BigInt::one();
                    if out.len() > MAX_GENERATED {
                        return Err(EvalError::at(e, "integer range is too large"));
                    }
                }
                Value::set_sorted(out)
            }
            Subseteq => {
                let (x, y) = (self.eval_set(a)?, self.eval_set(b)?);
                Value::Bool(x.iter().all(|v| y.binary_search(v).is_ok()))
            }
            Cup | Cap | SetMinus => {
                let (x, y) = (self.eval_set(a)?, self.eval_set(b)?);
                let out: Vec<Value> = match op {
                    Cup => {
                        let mut v: Vec<Value> = x.iter().chain(y.iter()).cloned().collect();
                        v.sort();
                        v.dedup();
                        v
                    }
                    Cap => x.iter().filter(|v| y.binary_search(v).is_ok()).cloned().collect(),
                    _ => x.iter().filter(|v| y.binary_search(v).is_err()).cloned().collect(),
                };
                Value::set_sorted(out)
            }
            FnSet => {
                let (d, c) = (self.eval_set(a)?, self.eval_set(b)?);
                fn_space(&d, &c).ok_or_else(|| EvalError::at(e, "function set is too large"))?
            }
        })
    }

    fn builtin(&mut self, e: &'u Expr, name: &str, args: &'u [Expr]) -> EvalResult<Value> {
        let vals = args.iter().map(|a| self.eval(a)).collect::<EvalResult<Vec<_>>>()?;
        let seq = |v: &Value| -> EvalResult<Arc<[Value]>> {
            match v {
                Value::Seq(s) => Ok(s.clone()),
                other => Err(EvalError::at(e, format!("{name} expects a sequence, found {} {other}", other.kind_name()))),
            }
        };
        Ok(match name {
            "Len" => Value::int(seq(&vals[0])?.len() as u64),
            "Append" => {
                let mut s = seq(&vals[0])?.to_vec();
                s.push(vals[1].clone());
                Value::seq(s)
            }
            "Head" => match seq(&vals[0])?.first() {
                Some(v) => v.clone(),
                None => return Err(EvalError::at(e, "Head of the empty sequence")),
            },
            "Tail" => {
                let s = seq(&vals[0])?;
                if s.is_empty() {
                    return Err(EvalError::at(e, "Tail of the empty sequence"));
                }
                Value::seq(s[1..].to_vec())
            }
            "SubSeq" => {
                let s = seq(&vals[0])?;
                let bound = |v: &Value| v.as_int().and_then(|n| n.to_i64());
                let (Some(m), Some(n)) = (bound(&vals[1]), bound(&vals[2])) else {
                    return Err(EvalError::at(e, "SubSeq bounds must be integers"));
                };
                if m > n {
                    Value::seq(Vec::new())
                } else if m < 1 || n as usize > s.len() {
                    return Err(EvalError::at(e, format!("SubSeq bounds {m}..{n} outside 1..{}", s.len())));
                } else {
                    Value::seq(s[m as usize - 1..n as usize].to_vec())
                }
            }
            "Cardinality" => match &vals[0] {
                Value::Set(s) => Value::int(s.len() as u64),
                other => return Err(EvalError::at(e, format!("Cardinality of {} {other}", other.kind_name()))),
            },
            _ => return Err(EvalError::at(e, format!("unknown operator `{name}`"))),
        })
    }
}

fn collect_var_tuple(e: &Expr, unit: &CheckUnit, out: &mut Vec<usize>) -> bool {
    match &e.kind {
        ExprKind::Ident(n) => {
            if let Some(&s) = unit.var_slot.get(n) {
                out.push(s);
                true
            } else if let Some(d) = unit.definition(n) {
                d.params.is_empty() && collect_var_tuple(&d.body, unit, out)
            } else {
                false
            }
        }
        ExprKind::Tuple(items) => items.iter().all(|i| collect_var_tuple(i, unit, out)),
        _ => false,
    }
}

fn powerset(elems: &[Value]) -> Option<Value> {
    let n = elems.len();
    if n >= usize::BITS as usize || (1usize << n) > MAX_GENERATED {
        return None;
    }
    let mut out: Vec<Value> = (0..1usize << n)
        .map(|mask| Value::Set((0..n).filter(|i| mask >> i & 1 == 1).map(|i| elems[i].clone()).collect()))
        .collect();
    out.sort();
    Some(Value::Set(out.into()))
}

fn fn_space(dom: &[Value], cod: &[Value]) -> Option<Value> {
    let mut total: usize = 1;
    for _ in dom {
        total = total.checked_mul(cod.len())?;
        if total > MAX_GENERATED {
            return None;
        }
    }
    if cod.is_empty() && !dom.is_empty() {
        return Some(Value::empty_set());
    }
    let mut idx = vec![0usize; dom.len()];
    let mut out = Vec::with_capacity(total);
    loop {
        out.push(Value::fn_from(dom.iter().cloned().zip(idx.iter().map(|&i| cod[i].clone()))));
        let mut pos = dom.len();
        loop {
            if pos == 0 {
                out.sort();
                return Some(Value::Set(out.into()));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < cod.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}
