//! Brute-force reference models written directly in Rust, with their own
//! breadth-first search. They share nothing with the engine except the
//! kernel value types used to compare states.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};
use std::hash::Hash;

use tlawb_core::kernel::{State, Value};

pub trait Model {
    type S: Clone + Eq + Hash;
    /// Action names in table order, `Init` excluded.
    fn actions(&self) -> Vec<&'static str>;
    fn init(&self) -> Vec<Self::S>;
    /// Successors tagged with a 1-based action index, in table order and
    /// parameter order.
    fn next(&self, s: &Self::S) -> Vec<(usize, Self::S)>;
    fn constraint(&self, _s: &Self::S) -> bool {
        true
    }
    fn action_constraint(&self, _s: &Self::S, _t: &Self::S) -> bool {
        true
    }
    fn violated(&self, _s: &Self::S) -> Option<&'static str> {
        None
    }
    fn terminal(&self, _s: &Self::S) -> bool {
        false
    }
    fn to_state(&self, s: &Self::S) -> State;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    Ok,
    Violated(&'static str),
    Deadlock,
}

#[derive(Debug, Clone)]
pub struct OracleResult<S> {
    pub outcome: OracleOutcome,
    pub distinct: u64,
    pub total: u64,
    pub constrained: u64,
    pub transitions: u64,
    pub diameter: u64,
    /// (total, distinct) per action, `Init` first.
    pub per_action: Vec<(u64, u64)>,
    pub states: Vec<S>,
    /// BFS depth (1-based) of the state the run stopped at.
    pub stop_depth: Option<usize>,
    pub stop_state: Option<S>,
}

pub fn bfs<M: Model>(m: &M) -> OracleResult<M::S> {
    let mut r = OracleResult {
        outcome: OracleOutcome::Ok,
        distinct: 0,
        total: 0,
        constrained: 0,
        transitions: 0,
        diameter: 0,
        per_action: vec![(0, 0); m.actions().len() + 1],
        states: Vec::new(),
        stop_depth: None,
        stop_state: None,
    };
    let mut seen: HashMap<M::S, ()> = HashMap::new();
    let mut frontier = Vec::new();
    for s in m.init() {
        if !m.constraint(&s) {
            r.constrained += 1;
            continue;
        }
        r.total += 1;
        r.per_action[0].0 += 1;
        if seen.insert(s.clone(), ()).is_none() {
            r.per_action[0].1 += 1;
            r.distinct += 1;
            r.states.push(s.clone());
            frontier.push(s);
        }
    }
    r.diameter = 1;
    let mut depth = 1;
    if let Some((inv, s)) = frontier.iter().find_map(|s| m.violated(s).map(|i| (i, s.clone()))) {
        r.outcome = OracleOutcome::Violated(inv);
        r.stop_depth = Some(depth);
        r.stop_state = Some(s);
        return r;
    }
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for s in &frontier {
            let succs = m.next(s);
            if succs.is_empty() && !m.terminal(s) {
                r.outcome = OracleOutcome::Deadlock;
                r.stop_depth = Some(depth);
                r.stop_state = Some(s.clone());
                return r;
            }
            let mut edges = HashSet::new();
            for (a, t) in succs {
                if !m.constraint(&t) || !m.action_constraint(s, &t) {
                    r.constrained += 1;
                    continue;
                }
                r.total += 1;
                r.per_action[a].0 += 1;
                if seen.insert(t.clone(), ()).is_none() {
                    r.per_action[a].1 += 1;
                    r.distinct += 1;
                    r.states.push(t.clone());
                    next.push(t.clone());
                }
                if edges.insert((t, a)) {
                    r.transitions += 1;
                }
            }
        }
        if !next.is_empty() {
            r.diameter += 1;
            depth += 1;
        }
        if let Some((inv, s)) = next.iter().find_map(|s| m.violated(s).map(|i| (i, s.clone()))) {
            r.outcome = OracleOutcome::Violated(inv);
            r.stop_depth = Some(depth);
            r.stop_state = Some(s);
            return r;
        }
        frontier = next;
    }
    r
}

/// The process variants: correct, wrong order, inefficient guard, fixed guard.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Correct,
    Bad,
    Inefficient,
    Fixed,
}

pub struct Simple {
    pub n: usize,
    pub variant: Variant,
}

type Step = fn(&Simple, &Procs, usize) -> Option<Procs>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Procs {
    pub x: Vec<u8>,
    pub y: Vec<u8>,
    pub pc: Vec<&'static str>,
}

impl Simple {
    fn step_a(&self, s: &Procs, i: usize) -> Option<Procs> {
        (s.pc[i] == "a").then(|| {
            let mut t = s.clone();
            t.x[i] = 1;
            t.pc[i] = if self.variant == Variant::Bad { "Done" } else { "b" };
            t
        })
    }

    fn step_b(&self, s: &Procs, i: usize) -> Option<Procs> {
        let enabled = match self.variant {
            Variant::Inefficient => s.x[i] == 1 && s.y[i] == 0,
            _ => s.pc[i] == "b",
        };
        enabled.then(|| {
            let mut t = s.clone();
            t.y[i] = s.x[(i + self.n - 1) % self.n];
            t.pc[i] = if self.variant == Variant::Bad { "a" } else { "Done" };
            t
        })
    }

    fn step_d(&self, s: &Procs, i: usize) -> Option<Procs> {
        (s.pc[i] == "c").then(|| {
            let mut t = s.clone();
            t.pc[i] = "Done";
            t
        })
    }

    fn all_done(&self, s: &Procs) -> bool {
        s.pc.iter().all(|p| *p == "Done")
    }
}

impl Model for Simple {
    type S = Procs;

    fn actions(&self) -> Vec<&'static str> {
        match self.variant {
            Variant::Correct => vec!["a", "b"],
            Variant::Bad => vec!["b", "a"],
            _ => vec!["a", "b", "d"],
        }
    }

    fn init(&self) -> Vec<Procs> {
        let start = if self.variant == Variant::Bad { "b" } else { "a" };
        vec![Procs { x: vec![0; self.n], y: vec![0; self.n], pc: vec![start; self.n] }]
    }

    fn next(&self, s: &Procs) -> Vec<(usize, Procs)> {
        let steps: Vec<Step> = match self.variant {
            Variant::Correct => vec![Simple::step_a, Simple::step_b],
            Variant::Bad => vec![Simple::step_b, Simple::step_a],
            _ => vec![Simple::step_a, Simple::step_b, Simple::step_d],
        };
        let mut out = Vec::new();
        for (k, f) in steps.iter().enumerate() {
            for i in 0..self.n {
                if let Some(t) = f(self, s, i) {
                    out.push((k + 1, t));
                }
            }
        }
        out
    }

    fn violated(&self, s: &Procs) -> Option<&'static str> {
        if self.variant == Variant::Correct {
            let type_ok = s.x.iter().chain(&s.y).all(|v| *v <= 1) && s.pc.iter().all(|p| ["a", "b", "Done"].contains(p));
            if !type_ok {
                return Some("TypeOK");
            }
        }
        (self.all_done(s) && !s.y.contains(&1)).then_some("PCorrect")
    }

    fn terminal(&self, s: &Procs) -> bool {
        self.all_done(s)
    }

    fn to_state(&self, s: &Procs) -> State {
        let f = |v: &[u8]| Value::fn_from(v.iter().enumerate().map(|(i, b)| (Value::int(i as i64), Value::int(*b as i64))));
        let pc = Value::fn_from(s.pc.iter().enumerate().map(|(i, p)| (Value::int(i as i64), Value::str(p))));
        State::from_bindings([("x", f(&s.x)), ("y", f(&s.y)), ("pc", pc)])
    }
}

/// Jugs of 5 and 3 gallons; `check_solved` adds the `big # 4` invariant.
pub struct DieHard {
    pub check_solved: bool,
}

impl Model for DieHard {
    type S = (i64, i64);

    fn actions(&self) -> Vec<&'static str> {
        vec!["FillSmall", "FillBig", "EmptySmall", "EmptyBig", "SmallToBig", "BigToSmall"]
    }

    fn init(&self) -> Vec<(i64, i64)> {
        vec![(0, 0)]
    }

    fn next(&self, &(big, small): &(i64, i64)) -> Vec<(usize, (i64, i64))> {
        let to_big = if big + small <= 5 { (big + small, 0) } else { (5, small - (5 - big)) };
        let to_small = if big + small <= 3 { (0, big + small) } else { (big - (3 - small), 3) };
        vec![(1, (big, 3)), (2, (5, small)), (3, (big, 0)), (4, (0, small)), (5, to_big), (6, to_small)]
    }

    fn violated(&self, &(big, small): &(i64, i64)) -> Option<&'static str> {
        if !(0..=3).contains(&small) || !(0..=5).contains(&big) {
            return Some("TypeOK");
        }
        (self.check_solved && big == 4).then_some("NotSolved")
    }

    fn to_state(&self, &(big, small): &(i64, i64)) -> State {
        State::from_bindings([("big", Value::int(big)), ("small", Value::int(small))])
    }
}

/// Bounded FIFO with a send counter.
pub struct Channel {
    pub msgs: Vec<&'static str>,
    pub cap: usize,
    pub bound: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chan {
    pub q: Vec<&'static str>,
    pub sent: u32,
    pub got: BTreeSet<&'static str>,
}

impl Model for Channel {
    type S = Chan;

    fn actions(&self) -> Vec<&'static str> {
        vec!["Recv", "Send"]
    }

    fn init(&self) -> Vec<Chan> {
        vec![Chan { q: vec![], sent: 0, got: BTreeSet::new() }]
    }

    fn next(&self, s: &Chan) -> Vec<(usize, Chan)> {
        let mut out = Vec::new();
        if let Some((&h, rest)) = s.q.split_first() {
            let mut got = s.got.clone();
            got.insert(h);
            out.push((1, Chan { q: rest.to_vec(), sent: s.sent, got }));
        }
        let mut msgs = self.msgs.clone();
        msgs.sort();
        for m in msgs {
            if s.q.len() < self.cap {
                let mut q = s.q.clone();
                q.push(m);
                out.push((2, Chan { q, sent: s.sent + 1, got: s.got.clone() }));
            }
        }
        out
    }

    fn constraint(&self, s: &Chan) -> bool {
        s.sent <= self.bound
    }

    fn action_constraint(&self, s: &Chan, t: &Chan) -> bool {
        t.got != s.got || t.sent > s.sent
    }

    fn violated(&self, s: &Chan) -> Option<&'static str> {
        let ok = s.got.iter().all(|g| self.msgs.contains(g)) && s.q.len() <= self.cap && s.got.len() as u32 <= s.sent;
        (!ok).then_some("Inv")
    }

    fn to_state(&self, s: &Chan) -> State {
        State::from_bindings([
            ("q", Value::seq(s.q.iter().map(Value::str).collect())),
            ("sent", Value::int(s.sent as i64)),
            ("got", Value::set_from(s.got.iter().map(Value::str))),
        ])
    }
}
