//! Breadth-first reachability.
//!
//! Each BFS level is expanded by a pool of workers over contiguous chunks of
//! the frontier, and the results are merged in frontier order, so the merged
//! counts, traces and profile do not depend on scheduling.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant, SystemTime};

use rayon::prelude::*;

use crate::kernel::{collision_probability, fingerprint_state, Fingerprint, State};
use crate::lang::CheckUnit;
use crate::profiler::ProfileSink;

use super::eval::{EvalError, EvalResult, Evaluator};
use super::graph::StateGraph;
use super::report::*;

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub seed: u64,
    pub workers: usize,
    pub profile: bool,
    pub retain_graph: bool,
    pub check_deadlock: bool,
    pub sample_interval: Duration,
    pub distributed: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seed: 0,
            workers: 1,
            profile: false,
            retain_graph: false,
            check_deadlock: true,
            sample_interval: Duration::from_millis(250),
            distributed: false,
        }
    }
}

/// A finished check: the report plus artifacts that are not part of it.
#[derive(Clone, Debug)]
pub struct CheckRun {
    pub report: CheckReport,
    pub timing: Timing,
    pub graph: Option<StateGraph>,
}

struct Succ {
    action: usize,
    state: State,
    fp: Fingerprint,
    admitted: bool,
}

#[derive(Default)]
struct Expanded {
    succs: Vec<Succ>,
    deadlock: bool,
    error: Option<EvalError>,
}

struct Store {
    states: Vec<State>,
    fps: Vec<Fingerprint>,
    pred: Vec<Option<(u32, usize)>>,
    seen: HashMap<Fingerprint, u32>,
}

impl Store {
    fn insert(&mut self, s: State, fp: Fingerprint, pred: Option<(u32, usize)>) -> (u32, bool) {
        if let Some(&id) = self.seen.get(&fp) {
            return (id, false);
        }
        let id = self.states.len() as u32;
        self.states.push(s);
        self.fps.push(fp);
        self.pred.push(pred);
        self.seen.insert(fp, id);
        (id, true)
    }

    fn trace_to(&self, unit: &CheckUnit, id: u32) -> ErrorTrace {
        let mut chain = vec![(id, 0usize)];
        let mut cur = id;
        while let Some((p, a)) = self.pred[cur as usize] {
            chain.last_mut().unwrap().1 = a;
            chain.push((p, 0));
            cur = p;
        }
        chain.reverse();
        let states = chain
            .into_iter()
            .enumerate()
            .map(|(i, (sid, action))| {
                let a = &unit.actions[action];
                TraceStep { ordinal: i + 1, action: a.name.clone(), range: a.range.clone(), state: self.states[sid as usize].clone() }
            })
            .collect();
        ErrorTrace { states, lasso_back_to: None }
    }
}

fn admitted(ev: &mut Evaluator<'_>, unit: &CheckUnit, s: Option<&State>, t: &State) -> EvalResult<bool> {
    for c in &unit.config.constraints {
        if !ev.holds(c, t)? {
            return Ok(false);
        }
    }
    if let Some(s) = s {
        for c in &unit.config.action_constraints {
            if !ev.holds_on_step(c, s, Some(t))? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn expand(ev: &mut Evaluator<'_>, unit: &CheckUnit, s: &State, opts: &CheckOptions) -> Expanded {
    let run = |ev: &mut Evaluator<'_>| -> EvalResult<Expanded> {
        let raw = ev.successors(s)?;
        let mut out = Expanded { deadlock: false, ..Default::default() };
        if raw.is_empty() && opts.check_deadlock {
            out.deadlock = match &unit.config.terminal {
                Some(t) => !ev.holds(t, s)?,
                None => true,
            };
        }
        for (action, t) in raw {
            let ok = admitted(ev, unit, Some(s), &t)?;
            let fp = fingerprint_state(&t, opts.seed);
            out.succs.push(Succ { action, state: t, fp, admitted: ok });
        }
        Ok(out)
    };
    run(ev).unwrap_or_else(|e| Expanded { error: Some(e), ..Default::default() })
}

/// First violated invariant of `s`, if any.
fn violated(ev: &mut Evaluator<'_>, unit: &CheckUnit, s: &State) -> EvalResult<Option<String>> {
    for inv in &unit.config.invariants {
        if !ev.holds(inv, s)? {
            return Ok(Some(inv.to_string()));
        }
    }
    Ok(None)
}

struct Checker<'u> {
    unit: &'u CheckUnit,
    opts: CheckOptions,
    pool: Option<rayon::ThreadPool>,
    main: Evaluator<'u>,
    store: Store,
    stats: CheckStatistics,
    edges: Vec<(u32, u32, usize)>,
    started: Instant,
    last_sample: Instant,
    queue_series: Vec<(u64, u64)>,
}

enum Stop {
    Outcome(Outcome, Option<u32>),
}

impl<'u> Checker<'u> {
    fn sample(&mut self, unexplored: usize, force: bool) {
        let now = Instant::now();
        if force || now.duration_since(self.last_sample) >= self.opts.sample_interval {
            self.queue_series.push((now.duration_since(self.started).as_millis() as u64, unexplored as u64));
            self.last_sample = now;
        }
    }

    fn progress(&mut self, unexplored: usize) {
        self.stats.progress.push(Progress {
            diameter: self.stats.diameter,
            total: self.stats.total_states,
            distinct: self.stats.distinct_states,
            unexplored: unexplored as u64,
        });
    }

    /// Runs `f` over `items` in chunks, on the pool if there is one, and
    /// returns the per-item results in order together with worker profiles.
    fn par_map<T: Sync, R: Send>(
        &self,
        items: &[T],
        f: impl Fn(&mut Evaluator<'u>, &T) -> R + Sync,
    ) -> (Vec<R>, Vec<ProfileSink>) {
        let unit = self.unit;
        let profile = self.opts.profile;
        let work = |chunk: &[T]| {
            let mut ev = Evaluator::new(unit, profile);
            let out: Vec<R> = chunk.iter().map(|x| f(&mut ev, x)).collect();
            (out, ev.take_profile())
        };
        let parts: Vec<(Vec<R>, Option<ProfileSink>)> = match &self.pool {
            None => vec![work(items)],
            Some(pool) => {
                let size = items.len().div_ceil(self.opts.workers * 4).max(1);
                pool.install(|| items.par_chunks(size).map(work).collect())
            }
        };
        let mut results = Vec::with_capacity(items.len());
        let mut sinks = Vec::new();
        for (r, s) in parts {
            results.extend(r);
            sinks.extend(s);
        }
        (results, sinks)
    }

    fn merge_profiles(&mut self, sinks: Vec<ProfileSink>) {
        if let Some(main) = self.main.profile_mut() {
            for s in &sinks {
                main.merge(s);
            }
        }
    }

    fn count(&mut self, action: usize, is_new: bool) {
        self.stats.total_states += 1;
        let a = &mut self.stats.per_action[action];
        a.total += 1;
        if is_new {
            a.distinct += 1;
            self.stats.distinct_states += 1;
        }
        if let Some(p) = self.main.profile_mut() {
            p.action_state(action, is_new);
        }
    }

    fn init(&mut self) -> Result<Vec<u32>, Stop> {
        let inits = self.main.initial_states().map_err(|e| Stop::Outcome(Outcome::Error(e.to_string()), None))?;
        let mut frontier = Vec::new();
        for s in inits {
            let ok = admitted(&mut self.main, self.unit, None, &s)
                .map_err(|e| Stop::Outcome(Outcome::Error(e.to_string()), None))?;
            if !ok {
                self.stats.constrained += 1;
                continue;
            }
            let fp = fingerprint_state(&s, self.opts.seed);
            let (id, is_new) = self.store.insert(s, fp, None);
            self.count(0, is_new);
            if is_new {
                frontier.push(id);
            }
        }
        if self.store.states.is_empty() {
            return Err(Stop::Outcome(Outcome::Error("no initial states".into()), None));
        }
        self.stats.diameter = 1;
        for &id in &frontier {
            let s = self.store.states[id as usize].clone();
            match violated(&mut self.main, self.unit, &s) {
                Ok(None) => {}
                Ok(Some(inv)) => return Err(Stop::Outcome(Outcome::InvariantViolated(inv), Some(id))),
                Err(e) => return Err(Stop::Outcome(Outcome::Error(e.to_string()), Some(id))),
            }
        }
        Ok(frontier)
    }

    fn level(&mut self, frontier: &[u32]) -> Result<Vec<u32>, Stop> {
        let states: Vec<&State> = frontier.iter().map(|&id| &self.store.states[id as usize]).collect();
        let unit = self.unit;
        let opts = self.opts.clone();
        let (expanded, sinks) = self.par_map(&states, |ev, s| expand(ev, unit, s, &opts));
        self.merge_profiles(sinks);

        let mut next = Vec::new();
        for (&src, ex) in frontier.iter().zip(expanded) {
            if let Some(e) = ex.error {
                return Err(Stop::Outcome(Outcome::Error(e.to_string()), Some(src)));
            }
            if ex.deadlock {
                return Err(Stop::Outcome(Outcome::Deadlock, Some(src)));
            }
            let mut local: HashSet<(u32, usize)> = HashSet::new();
            for succ in ex.succs {
                if !succ.admitted {
                    self.stats.constrained += 1;
                    continue;
                }
                let (dst, is_new) = self.store.insert(succ.state, succ.fp, Some((src, succ.action)));
                self.count(succ.action, is_new);
                if is_new {
                    next.push(dst);
                }
                if local.insert((dst, succ.action)) {
                    self.stats.transitions += 1;
                    if self.opts.retain_graph {
                        self.edges.push((src, dst, succ.action));
                    }
                }
            }
        }
        if !next.is_empty() {
            self.stats.diameter += 1;
        }

        let new_states: Vec<&State> = next.iter().map(|&id| &self.store.states[id as usize]).collect();
        let (verdicts, sinks) = self.par_map(&new_states, |ev, s| violated(ev, unit, s));
        self.merge_profiles(sinks);
        for (&id, v) in next.iter().zip(verdicts) {
            match v {
                Ok(None) => {}
                Ok(Some(inv)) => return Err(Stop::Outcome(Outcome::InvariantViolated(inv), Some(id))),
                Err(e) => return Err(Stop::Outcome(Outcome::Error(e.to_string()), Some(id))),
            }
        }
        Ok(next)
    }
}

/// Explores the reachable state space of `unit`.
pub fn check(unit: &CheckUnit, opts: &CheckOptions) -> CheckRun {
    let started_wall = SystemTime::now();
    let started = Instant::now();
    let workers = opts.workers.max(1);
    let pool = (workers > 1).then(|| {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool construction")
    });
    let per_action = unit
        .actions
        .iter()
        .map(|a| ActionCount { name: a.name.clone(), range: a.range.clone(), total: 0, distinct: 0 })
        .collect();
    let mut c = Checker {
        unit,
        opts: CheckOptions { workers, ..opts.clone() },
        pool,
        main: Evaluator::new(unit, opts.profile),
        store: Store { states: Vec::new(), fps: Vec::new(), pred: Vec::new(), seen: HashMap::new() },
        stats: CheckStatistics { per_action, ..Default::default() },
        edges: Vec::new(),
        started,
        last_sample: started,
        queue_series: Vec::new(),
    };

    let mut stop = None;
    match c.init() {
        Err(s) => stop = Some(s),
        Ok(mut frontier) => {
            c.progress(frontier.len());
            c.sample(frontier.len(), true);
            while !frontier.is_empty() {
                match c.level(&frontier) {
                    Ok(next) => {
                        c.progress(next.len());
                        c.sample(next.len(), false);
                        frontier = next;
                    }
                    Err(s) => {
                        stop = Some(s);
                        break;
                    }
                }
            }
        }
    }
    let (outcome, at) = match stop {
        None => (Outcome::Ok, None),
        Some(Stop::Outcome(o, at)) => (o, at),
    };
    if !matches!(c.stats.progress.last(), Some(p) if p.total == c.stats.total_states && p.distinct == c.stats.distinct_states)
    {
        c.progress(0);
    }
    c.sample(0, true);

    let trace = at.map(|id| c.store.trace_to(unit, id));
    let profile = c.main.take_profile().map(|sink| {
        let ranges = unit.module.expr_ranges().into_iter().collect();
        let actions: Vec<_> = unit.actions.iter().map(|a| (a.name.clone(), a.range.clone())).collect();
        sink.finalize(&ranges, &actions, opts.seed)
    });
    let graph = opts.retain_graph.then(|| StateGraph {
        nodes: c.store.fps.iter().copied().zip(c.store.states.iter().cloned()).collect(),
        edges: c.edges.iter().map(|&(s, d, a)| (s, d, unit.actions[a].name.clone())).collect(),
    });
    let report = CheckReport {
        module: unit.module.name.clone(),
        variables: unit.variables().to_vec(),
        outcome,
        collision_probability: collision_probability(c.stats.distinct_states),
        statistics: c.stats,
        trace,
        profile,
        seed: opts.seed,
        workers,
        distributed: opts.distributed,
    };
    let timing = Timing { started: started_wall, finished: SystemTime::now(), queue_series: c.queue_series };
    CheckRun { report, timing, graph }
}

pub(crate) fn action_index(unit: &CheckUnit, name: &str) -> Option<usize> {
    unit.actions.iter().position(|a| &*a.name == name)
}
