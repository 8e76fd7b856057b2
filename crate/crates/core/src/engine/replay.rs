use crate::kernel::State;
use crate::lang::CheckUnit;

use super::check::action_index;
use super::eval::Evaluator;
use super::report::ErrorTrace;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayVerdict {
    Valid,
    /// The first step that the unit does not permit.
    Invalid { ordinal: usize, reason: String },
}

impl ReplayVerdict {
    pub fn is_valid(&self) -> bool {
        *self == ReplayVerdict::Valid
    }
}

/// Checks that every step of `trace` is permitted by `unit`: the first
/// state is initial, each later state follows from its predecessor by the
/// named action, and a lasso's back edge is a step of some action.
pub fn replay(unit: &CheckUnit, trace: &ErrorTrace) -> ReplayVerdict {
    let invalid = |ordinal: usize, reason: String| ReplayVerdict::Invalid { ordinal, reason };
    let vars = unit.sorted_variables();
    let mut ev = Evaluator::new(unit, false);
    for (i, step) in trace.states.iter().enumerate() {
        let ordinal = i + 1;
        if step.ordinal != ordinal {
            return invalid(ordinal, format!("expected ordinal {ordinal}, found {}", step.ordinal));
        }
        if !step.state.binds_exactly(vars) {
            return invalid(ordinal, "state does not bind exactly the module's variables".into());
        }
        if i == 0 {
            match ev.initial_states() {
                Ok(inits) if inits.contains(&step.state) => continue,
                Ok(_) => return invalid(ordinal, "not an initial state".into()),
                Err(e) => return invalid(ordinal, e.to_string()),
            }
        }
        let prev = &trace.states[i - 1].state;
        let Some(a) = action_index(unit, &step.action).filter(|&a| a > 0) else {
            return invalid(ordinal, format!("unknown action `{}`", step.action));
        };
        match ev.action_successors(a, prev) {
            Ok(succs) if succs.contains(&step.state) => {}
            Ok(_) => return invalid(ordinal, format!("not a `{}` step from state {}", step.action, ordinal - 1)),
            Err(e) => return invalid(ordinal, e.to_string()),
        }
    }
    if let Some(back) = trace.lasso_back_to {
        let len = trace.states.len();
        if back == 0 || back > len {
            return invalid(len, format!("lasso target {back} is outside the trace"));
        }
        let (last, target): (&State, &State) = (&trace.states[len - 1].state, &trace.states[back - 1].state);
        match ev.successors(last) {
            Ok(succs) if succs.iter().any(|(_, t)| t == target) => {}
            Ok(_) => return invalid(len, format!("no action leads back to state {back}")),
            Err(e) => return invalid(len, e.to_string()),
        }
    }
    ReplayVerdict::Valid
}
