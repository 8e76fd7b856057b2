//! The checker: evaluation, successor enumeration, breadth-first search,
//! reports, graph export and trace replay.

mod check;
mod eval;
mod graph;
mod replay;
mod report;

pub use check::{check, CheckOptions, CheckRun};
pub use eval::{EvalError, EvalResult, Evaluator};
pub use graph::{export_graph, export_nodes, GraphError, GraphFormat, StateGraph};
pub use replay::{replay, ReplayVerdict};
pub use report::{ActionCount, CheckReport, CheckStatistics, ErrorTrace, Outcome, Progress, Timing, TraceStep};
