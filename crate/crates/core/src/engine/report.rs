use std::fmt::Write;
use std::sync::Arc;
use std::time::SystemTime;

use crate::kernel::{render_value, State};
use crate::lang::SourceRange;
use crate::profiler::ProfileReport;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    InvariantViolated(String),
    Deadlock,
    Error(String),
}

impl Outcome {
    /// Process exit status for this outcome.
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::InvariantViolated(_) | Outcome::Deadlock => 1,
            Outcome::Error(_) => 4,
        }
    }

    pub fn is_ok(&self) -> bool {
        *self == Outcome::Ok
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Ok => f.write_str("ok"),
            Outcome::InvariantViolated(n) => write!(f, "invariant {n} is violated"),
            Outcome::Deadlock => f.write_str("deadlock reached"),
            Outcome::Error(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionCount {
    pub name: Arc<str>,
    pub range: SourceRange,
    pub total: u64,
    pub distinct: u64,
}

/// Counters at the end of one BFS level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Progress {
    pub diameter: u64,
    pub total: u64,
    pub distinct: u64,
    pub unexplored: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckStatistics {
    pub diameter: u64,
    pub distinct_states: u64,
    pub total_states: u64,
    /// Generated states discarded by a state or action constraint.
    pub constrained: u64,
    /// Distinct (source, action, target) triples between reachable states.
    pub transitions: u64,
    /// Indexed like the unit's action table; entry 0 is `Init`.
    pub per_action: Vec<ActionCount>,
    pub progress: Vec<Progress>,
}

impl CheckStatistics {
    pub fn action(&self, name: &str) -> Option<&ActionCount> {
        self.per_action.iter().find(|a| &*a.name == name)
    }
}

/// Wall-clock data. Kept apart from [`CheckReport`] so reports of equal
/// runs compare equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Timing {
    pub started: SystemTime,
    pub finished: SystemTime,
    /// (elapsed ms, unexplored states)
    pub queue_series: Vec<(u64, u64)>,
}

impl Timing {
    pub fn queue_csv(&self) -> String {
        let mut s = String::from("elapsed_ms,unexplored\n");
        for (t, n) in &self.queue_series {
            let _ = writeln!(s, "{t},{n}");
        }
        s
    }

    pub fn render(&self) -> String {
        let ms = |t: SystemTime| t.duration_since(SystemTime::UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let elapsed = self.finished.duration_since(self.started).map(|d| d.as_millis()).unwrap_or(0);
        format!(
            "started_unix_ms: {}\nfinished_unix_ms: {}\nelapsed_ms: {elapsed}\n",
            ms(self.started),
            ms(self.finished)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub ordinal: usize,
    pub action: Arc<str>,
    pub range: SourceRange,
    pub state: State,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorTrace {
    pub states: Vec<TraceStep>,
    /// Ordinal the last state loops back to.
    pub lasso_back_to: Option<usize>,
}

impl ErrorTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub module: Arc<str>,
    /// Declaration order, used when printing states.
    pub variables: Vec<Arc<str>>,
    pub outcome: Outcome,
    pub statistics: CheckStatistics,
    pub collision_probability: f64,
    pub trace: Option<ErrorTrace>,
    pub profile: Option<ProfileReport>,
    pub seed: u64,
    pub workers: usize,
    pub distributed: bool,
}

impl CheckReport {
    /// Human-readable summary, deterministic for equal reports.
    pub fn render(&self) -> String {
        let st = &self.statistics;
        let mut s = String::new();
        let _ = writeln!(s, "module: {}", self.module);
        let _ = writeln!(s, "outcome: {}", self.outcome);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "workers: {}", self.workers);
        let _ = writeln!(s, "distributed: {}", self.distributed);
        let _ = writeln!(s, "diameter: {}", st.diameter);
        let _ = writeln!(s, "distinct_states: {}", st.distinct_states);
        let _ = writeln!(s, "total_states: {}", st.total_states);
        let _ = writeln!(s, "constrained_states: {}", st.constrained);
        let _ = writeln!(s, "transitions: {}", st.transitions);
        let _ = writeln!(s, "collision_probability_estimate: {:e}", self.collision_probability);
        s.push_str("\naction                 total   distinct  location\n");
        for a in &st.per_action {
            let _ = writeln!(s, "{:<20} {:>8} {:>10}  {}", a.name, a.total, a.distinct, a.range);
        }
        if let Some(t) = &self.trace {
            let _ = writeln!(s, "\ntrace ({} states)", t.len());
            for step in &t.states {
                let _ = writeln!(s, "{}: <{} {}>", step.ordinal, step.action, step.range);
                for v in &self.variables {
                    if let Some(val) = step.state.get(v) {
                        let _ = writeln!(s, "/\\ {v} = {}", render_value(val));
                    }
                }
            }
            if let Some(b) = t.lasso_back_to {
                let _ = writeln!(s, "Back to state {b}");
            }
        }
        if let Some(p) = &self.profile {
            let never = p.never_enabled();
            if !never.is_empty() {
                let names: Vec<&str> = never.iter().map(|n| &**n).collect();
                let _ = writeln!(s, "\nnever enabled: {}", names.join(", "));
            }
        }
        s
    }
}
