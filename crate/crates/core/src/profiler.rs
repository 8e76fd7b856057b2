//! Evaluation and action statistics: invocation counts and enumeration
//! costs per source location (globally and per call chain), per-action
//! state counts, and heatmap bucketing.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;
use std::sync::Arc;

use crate::kernel::Fingerprint;
use crate::lang::{Expr, ExprId, SourceRange};

/// Stack of named definitions active during an evaluation, outermost first.
pub type ChainPath = Vec<Arc<str>>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Counter {
    invocations: u64,
    cost: u64,
}

/// A worker-local event sink. Sinks from different workers merge by pure
/// summation, so the merged result does not depend on scheduling.
#[derive(Clone, Debug)]
pub struct ProfileSink {
    chains: Vec<ChainPath>,
    children: HashMap<(u32, Arc<str>), u32>,
    counters: HashMap<(u32, ExprId), Counter>,
    actions: BTreeMap<usize, (u64, u64)>,
}

/// The root call chain, `⟨⟩`.
pub const ROOT_CHAIN: u32 = 0;

/// One profiler event.
#[derive(Clone, Debug)]
pub enum ProfileEvent<'a> {
    Invocation { expr: &'a Expr, chain: u32 },
    Cost { expr: &'a Expr, chain: u32, amount: u64 },
    ActionState { action: usize, fingerprint: Fingerprint, is_new: bool },
}

impl Default for ProfileSink {
    fn default() -> Self {
        Self::new()
    }
}

impl ProfileSink {
    pub fn new() -> Self {
        ProfileSink { chains: vec![Vec::new()], children: HashMap::new(), counters: HashMap::new(), actions: BTreeMap::new() }
    }

    pub fn record(&mut self, event: ProfileEvent<'_>) {
        match event {
            ProfileEvent::Invocation { expr, chain } => self.invocation(chain, expr.id),
            ProfileEvent::Cost { expr, chain, amount } => self.cost(chain, expr.id, amount),
            ProfileEvent::ActionState { action, is_new, .. } => self.action_state(action, is_new),
        }
    }

    #[inline]
    pub(crate) fn invocation(&mut self, chain: u32, id: ExprId) {
        self.counters.entry((chain, id)).or_default().invocations += 1;
    }

    #[inline]
    pub(crate) fn cost(&mut self, chain: u32, id: ExprId, amount: u64) {
        if amount > 0 {
            self.counters.entry((chain, id)).or_default().cost += amount;
        }
    }

    pub(crate) fn action_state(&mut self, action: usize, is_new: bool) {
        let e = self.actions.entry(action).or_default();
        e.0 += 1;
        if is_new {
            e.1 += 1;
        }
    }

    /// Chain id for `parent` extended by `name`.
    pub(crate) fn child_chain(&mut self, parent: u32, name: &Arc<str>) -> u32 {
        if let Some(&c) = self.children.get(&(parent, name.clone())) {
            return c;
        }
        let mut path = self.chains[parent as usize].clone();
        path.push(name.clone());
        let id = self.chains.len() as u32;
        self.chains.push(path);
        self.children.insert((parent, name.clone()), id);
        id
    }

    fn chain_id_for(&mut self, path: &[Arc<str>]) -> u32 {
        let mut id = ROOT_CHAIN;
        for n in path {
            id = self.child_chain(id, n);
        }
        id
    }

    /// Adds every count in `other` to this sink.
    pub fn merge(&mut self, other: &ProfileSink) {
        let mut remap = Vec::with_capacity(other.chains.len());
        for path in &other.chains {
            remap.push(self.chain_id_for(path));
        }
        for (&(chain, id), c) in &other.counters {
            let e = self.counters.entry((remap[chain as usize], id)).or_default();
            e.invocations += c.invocations;
            e.cost += c.cost;
        }
        for (&a, &(t, d)) in &other.actions {
            let e = self.actions.entry(a).or_default();
            e.0 += t;
            e.1 += d;
        }
    }

    /// Aggregates counters by source location. `ranges` maps expression ids
    /// to locations; `actions` lists (name, location) by action index.
    pub fn finalize(
        &self,
        ranges: &HashMap<ExprId, SourceRange>,
        actions: &[(Arc<str>, SourceRange)],
        seed: u64,
    ) -> ProfileReport {
        let mut global: BTreeMap<SourceRange, Counter> = BTreeMap::new();
        let mut per_chain: BTreeMap<ChainPath, BTreeMap<SourceRange, Counter>> = BTreeMap::new();
        for (&(chain, id), c) in &self.counters {
            let Some(loc) = ranges.get(&id) else { continue };
            let g = global.entry(loc.clone()).or_default();
            g.invocations += c.invocations;
            g.cost += c.cost;
            let p = per_chain.entry(self.chains[chain as usize].clone()).or_default().entry(loc.clone()).or_default();
            p.invocations += c.invocations;
            p.cost += c.cost;
        }
        let to_stats = |m: BTreeMap<SourceRange, Counter>| -> Vec<EvalStat> {
            m.into_iter()
                .map(|(location, c)| EvalStat { location, invocations: c.invocations, cost: c.cost })
                .collect()
        };
        let actions = actions
            .iter()
            .enumerate()
            .map(|(i, (name, location))| {
                let (total, distinct) = self.actions.get(&i).copied().unwrap_or((0, 0));
                ActionStat { name: name.clone(), location: location.clone(), total, distinct }
            })
            .collect();
        ProfileReport::new(
            to_stats(global),
            per_chain.into_iter().map(|(chain, m)| CallChainStat { chain, stats: to_stats(m) }).collect(),
            actions,
            seed,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalStat {
    pub location: SourceRange,
    pub invocations: u64,
    pub cost: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallChainStat {
    pub chain: ChainPath,
    pub stats: Vec<EvalStat>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionStat {
    pub name: Arc<str>,
    pub location: SourceRange,
    pub total: u64,
    pub distinct: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Invocations,
    Cost,
    TotalStates,
    DistinctStates,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Invocations, Metric::Cost, Metric::TotalStates, Metric::DistinctStates];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Invocations => "invocations",
            Metric::Cost => "cost",
            Metric::TotalStates => "total_states",
            Metric::DistinctStates => "distinct_states",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s || (s == "states" && *m == Metric::TotalStates))
    }

    fn is_action_metric(self) -> bool {
        matches!(self, Metric::TotalStates | Metric::DistinctStates)
    }
}

/// Largest value of each metric over the report's locations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MetricMax {
    pub invocations: u64,
    pub cost: u64,
    pub total_states: u64,
    pub distinct_states: u64,
}

impl MetricMax {
    pub fn get(&self, m: Metric) -> u64 {
        match m {
            Metric::Invocations => self.invocations,
            Metric::Cost => self.cost,
            Metric::TotalStates => self.total_states,
            Metric::DistinctStates => self.distinct_states,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProfileReport {
    pub eval: Vec<EvalStat>,
    pub chains: Vec<CallChainStat>,
    pub actions: Vec<ActionStat>,
    pub seed: u64,
    pub metric_max: MetricMax,
}

/// Default number of heatmap buckets.
pub const DEFAULT_BUCKETS: usize = 10;

/// Bucket for `v` on a logarithmic scale of `k` buckets topped by `max`.
/// Zero is bucket 0; `max` is bucket `k - 1`.
pub fn bucket_of(v: u64, max: u64, k: usize) -> usize {
    assert!(k >= 2, "a heatmap needs at least two buckets");
    if v == 0 || max == 0 {
        return 0;
    }
    if v >= max || max == 1 {
        return k - 1;
    }
    let scaled = (k - 2) as f64 * (v as f64).ln() / (max as f64).ln();
    (1 + scaled.floor() as usize).min(k - 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeatCell {
    pub location: SourceRange,
    pub value: u64,
    pub bucket: usize,
    /// Set for action locations whose action never produced a state.
    pub never_enabled: bool,
}

impl ProfileReport {
    pub fn new(eval: Vec<EvalStat>, chains: Vec<CallChainStat>, actions: Vec<ActionStat>, seed: u64) -> Self {
        let metric_max = MetricMax {
            invocations: eval.iter().map(|s| s.invocations).max().unwrap_or(0),
            cost: eval.iter().map(|s| s.cost).max().unwrap_or(0),
            total_states: actions.iter().map(|a| a.total).max().unwrap_or(0),
            distinct_states: actions.iter().map(|a| a.distinct).max().unwrap_or(0),
        };
        ProfileReport { eval, chains, actions, seed, metric_max }
    }

    pub fn eval_at(&self, location: &SourceRange) -> Option<&EvalStat> {
        self.eval.iter().find(|s| &s.location == location)
    }

    pub fn action(&self, name: &str) -> Option<&ActionStat> {
        self.actions.iter().find(|a| &*a.name == name)
    }

    /// Buckets every location for `metric`. Invocations and cost cover
    /// expression locations; state metrics cover action locations.
    pub fn heatmap(&self, metric: Metric, buckets: usize) -> Vec<HeatCell> {
        let max = self.metric_max.get(metric);
        if metric.is_action_metric() {
            self.actions
                .iter()
                .map(|a| {
                    let value = if metric == Metric::TotalStates { a.total } else { a.distinct };
                    HeatCell {
                        location: a.location.clone(),
                        value,
                        bucket: bucket_of(value, max, buckets),
                        never_enabled: a.total == 0,
                    }
                })
                .collect()
        } else {
            self.eval
                .iter()
                .map(|s| {
                    let value = if metric == Metric::Invocations { s.invocations } else { s.cost };
                    HeatCell { location: s.location.clone(), value, bucket: bucket_of(value, max, buckets), never_enabled: false }
                })
                .collect()
        }
    }

    /// Call chains in which `location` was evaluated, each restricted to
    /// that location.
    pub fn filter_chain(&self, location: &SourceRange) -> Vec<CallChainStat> {
        self.chains
            .iter()
            .filter_map(|c| {
                let s = c.stats.iter().find(|s| &s.location == location)?;
                Some(CallChainStat { chain: c.chain.clone(), stats: vec![s.clone()] })
            })
            .collect()
    }

    /// Actions that never produced a state although their body was
    /// evaluated.
    pub fn never_enabled(&self) -> Vec<Arc<str>> {
        self.actions
            .iter()
            .filter(|a| a.total == 0 && self.eval_at(&a.location).is_some_and(|s| s.invocations > 0))
            .map(|a| a.name.clone())
            .collect()
    }

    /// Actions whose body was never evaluated at all.
    pub fn unreached_actions(&self) -> Vec<Arc<str>> {
        self.actions
            .iter()
            .filter(|a| a.total == 0 && self.eval_at(&a.location).is_none_or(|s| s.invocations == 0))
            .map(|a| a.name.clone())
            .collect()
    }

    /// Cost of every evaluation under each definition, including nested
    /// calls.
    pub fn inclusive_cost(&self) -> BTreeMap<Arc<str>, u64> {
        let mut out: BTreeMap<Arc<str>, u64> = BTreeMap::new();
        for c in &self.chains {
            let cost: u64 = c.stats.iter().map(|s| s.cost).sum();
            let mut seen: Vec<&Arc<str>> = Vec::new();
            for name in &c.chain {
                if !seen.contains(&name) {
                    seen.push(name);
                    *out.entry(name.clone()).or_default() += cost;
                }
            }
        }
        out
    }

    pub fn eval_csv(&self) -> String {
        let mut s = String::from("module,beginLine,beginCol,endLine,endCol,invocations,cost\n");
        for e in &self.eval {
            write_eval_row(&mut s, e);
            s.push('\n');
        }
        s
    }

    pub fn actions_csv(&self) -> String {
        let mut s = String::from("action,total,distinct\n");
        for a in &self.actions {
            let _ = writeln!(s, "{},{},{}", a.name, a.total, a.distinct);
        }
        s
    }

    pub fn chains_csv(&self) -> String {
        let mut s = String::from("chain,module,beginLine,beginCol,endLine,endCol,invocations,cost\n");
        for c in &self.chains {
            for e in &c.stats {
                s.push_str(&c.chain.join(">"));
                s.push(',');
                write_eval_row(&mut s, e);
                s.push('\n');
            }
        }
        s
    }
}

fn write_eval_row(s: &mut String, e: &EvalStat) {
    let l = &e.location;
    let _ = write!(
        s,
        "{},{},{},{},{},{},{}",
        l.module, l.begin_line, l.begin_col, l.end_line, l.end_col, e.invocations, e.cost
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(line: u32) -> SourceRange {
        SourceRange::new(Arc::from("M"), (line, 1), (line, 5))
    }

    fn ranges(n: u32) -> HashMap<ExprId, SourceRange> {
        (0..n).map(|i| (ExprId(i), loc(i + 1))).collect()
    }

    #[test]
    fn invocation_and_cost_events_accumulate() {
        let mut sink = ProfileSink::new();
        for _ in 0..3 {
            sink.invocation(ROOT_CHAIN, ExprId(0));
        }
        sink.cost(ROOT_CHAIN, ExprId(0), 10);
        sink.cost(ROOT_CHAIN, ExprId(0), 20);
        let r = sink.finalize(&ranges(1), &[], 0);
        assert_eq!(r.eval, vec![EvalStat { location: loc(1), invocations: 3, cost: 30 }]);
    }

    #[test]
    fn action_state_events_count_total_and_distinct() {
        let mut sink = ProfileSink::new();
        for i in 0..87u64 {
            sink.record(ProfileEvent::ActionState { action: 0, fingerprint: Fingerprint(i), is_new: i < 29 });
        }
        let r = sink.finalize(&HashMap::new(), &[(Arc::from("b"), loc(1))], 0);
        assert_eq!((r.actions[0].total, r.actions[0].distinct), (87, 29));
    }

    #[test]
    fn chains_partition_global_counts() {
        let mut sink = ProfileSink::new();
        let a = sink.child_chain(ROOT_CHAIN, &Arc::from("A"));
        let ab = sink.child_chain(a, &Arc::from("B"));
        sink.invocation(a, ExprId(0));
        sink.invocation(ab, ExprId(0));
        sink.invocation(ab, ExprId(0));
        sink.invocation(ROOT_CHAIN, ExprId(1));
        let r = sink.finalize(&ranges(2), &[], 0);
        let parts = r.filter_chain(&loc(1));
        assert_eq!(parts.len(), 2);
        assert_eq!(parts.iter().map(|c| c.stats[0].invocations).sum::<u64>(), 3);
        let top = r.filter_chain(&loc(2));
        assert_eq!(top.len(), 1);
        assert!(top[0].chain.is_empty());
        assert!(r.filter_chain(&loc(9)).is_empty());
    }

    #[test]
    fn merge_is_order_independent() {
        let mut w1 = ProfileSink::new();
        let c = w1.child_chain(ROOT_CHAIN, &Arc::from("X"));
        w1.invocation(c, ExprId(0));
        w1.cost(c, ExprId(0), 4);
        let mut w2 = ProfileSink::new();
        let _ = w2.child_chain(ROOT_CHAIN, &Arc::from("Y"));
        let c2 = w2.child_chain(ROOT_CHAIN, &Arc::from("X"));
        w2.invocation(c2, ExprId(0));
        let mut m1 = ProfileSink::new();
        m1.merge(&w1);
        m1.merge(&w2);
        let mut m2 = ProfileSink::new();
        m2.merge(&w2);
        m2.merge(&w1);
        assert_eq!(m1.finalize(&ranges(1), &[], 0), m2.finalize(&ranges(1), &[], 0));
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_of(0, 100, 10), 0);
        assert_eq!(bucket_of(100, 100, 10), 9);
        assert_eq!(bucket_of(1, 100, 10), 1);
        assert_eq!(bucket_of(1, 1, 10), 9);
        assert_eq!(bucket_of(0, 0, 10), 0);
        assert_eq!(bucket_of(5, 7, 2), 1);
        // 10 of 100 on a log scale is halfway: 1 + floor(8 * 0.5)
        assert_eq!(bucket_of(10, 100, 10), 5);
    }

    #[test]
    fn never_enabled_needs_invocations() {
        let eval = vec![EvalStat { location: loc(1), invocations: 5, cost: 0 }];
        let actions = vec![
            ActionStat { name: "d".into(), location: loc(1), total: 0, distinct: 0 },
            ActionStat { name: "e".into(), location: loc(2), total: 0, distinct: 0 },
            ActionStat { name: "a".into(), location: loc(3), total: 4, distinct: 2 },
        ];
        let r = ProfileReport::new(eval, vec![], actions, 0);
        assert_eq!(r.never_enabled(), vec![Arc::<str>::from("d")]);
        assert_eq!(r.unreached_actions(), vec![Arc::<str>::from("e")]);
        let heat = r.heatmap(Metric::TotalStates, 10);
        assert!(heat[0].never_enabled && heat[0].bucket == 0);
        assert_eq!(heat[2].bucket, 9);
    }
}
