//! Fault-injection scenarios for the simulated provider.
//!
//! One directive per line, executed in order; `#` starts a comment.
//!
//! ```text
//! instances 3            # instance count for later runs
//! fail ssh instance 2    # shell connections to instance 2 fail
//! fail mail              # mail delivery fails
//! fail launch            # launching instances fails
//! disconnect after chunk 2
//! clear faults
//! run                    # one lifecycle run
//! advance clock 700s     # move the virtual clock, then apply the termination policy
//! ```
//!
//! Without a `run` line, one run happens before the first clock advance.

use std::time::Duration;

use crate::lifecycle::{CheckRequest, Orchestrator, PolicyAction, RunConfig, RunOutcome};
use crate::provider::InstanceId;
use crate::sim::SimulatedProvider;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Instances(usize),
    FailSsh(InstanceId),
    FailMail,
    FailLaunch,
    Disconnect(usize),
    ClearFaults,
    Run,
    Advance(Duration),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("scenario line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

/// `700s`, `10m`, `2h` or a bare number of seconds.
pub fn parse_duration(text: &str) -> Option<Duration> {
    let (num, unit) = match text.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => text.split_at(i),
        None => (text, "s"),
    };
    let n: u64 = num.parse().ok()?;
    let secs = match unit {
        "s" => n,
        "m" => n.checked_mul(60)?,
        "h" => n.checked_mul(3600)?,
        _ => return None,
    };
    Some(Duration::from_secs(secs))
}

pub fn parse_scenario(text: &str) -> Result<Vec<Step>, ScenarioError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ScenarioError { line: i + 1, message };
        let words: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(format!("expected a number, found `{s}`")));
        let step = match words.as_slice() {
            ["instances", n] => Step::Instances(num(n)?),
            ["fail", "ssh", "instance", n] => Step::FailSsh(num(n)? as InstanceId),
            ["fail", "mail"] => Step::FailMail,
            ["fail", "launch"] => Step::FailLaunch,
            ["disconnect", "after", "chunk", n] => Step::Disconnect(num(n)?),
            ["clear", "faults"] => Step::ClearFaults,
            ["run"] => Step::Run,
            ["advance", "clock", d] => Step::Advance(parse_duration(d).ok_or_else(|| err(format!("bad duration `{d}`")))?),
            _ => return Err(err(format!("unknown directive `{line}`"))),
        };
        steps.push(step);
    }
    if !steps.contains(&Step::Run) {
        let at = steps.iter().position(|s| matches!(s, Step::Advance(_))).unwrap_or(steps.len());
        steps.insert(at, Step::Run);
    }
    Ok(steps)
}

/// The bundled scenarios, by name.
pub const BUNDLED: [(&str, &str); 6] = [
    ("happy", include_str!("../scenarios/happy.scenario")),
    ("reuse", include_str!("../scenarios/reuse.scenario")),
    ("mail-failure", include_str!("../scenarios/mail-failure.scenario")),
    ("ssh-failure", include_str!("../scenarios/ssh-failure.scenario")),
    ("disconnect", include_str!("../scenarios/disconnect.scenario")),
    ("launch-failure", include_str!("../scenarios/launch-failure.scenario")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Default)]
pub struct ScenarioRun {
    pub runs: Vec<RunOutcome>,
    /// Policy decisions after each clock advance.
    pub settlements: Vec<Vec<(InstanceId, PolicyAction)>>,
}

/// Executes `steps` against `sim` through `orch`.
pub fn run_scenario(
    sim: &SimulatedProvider,
    orch: &Orchestrator<'_, SimulatedProvider>,
    base: &RunConfig,
    req: &CheckRequest,
    steps: &[Step],
) -> ScenarioRun {
    let mut cfg = base.clone();
    let mut out = ScenarioRun::default();
    for step in steps {
        match step {
            Step::Instances(n) => cfg.count = *n,
            Step::FailSsh(id) => sim.update_faults(|f| {
                f.ssh.insert(*id);
            }),
            Step::FailMail => sim.update_faults(|f| f.mail = true),
            Step::FailLaunch => sim.update_faults(|f| f.launch = true),
            Step::Disconnect(k) => sim.update_faults(|f| f.disconnect_after = Some(*k)),
            Step::ClearFaults => sim.set_faults(Default::default()),
            Step::Run => out.runs.push(orch.run(&cfg, req)),
            Step::Advance(d) => {
                sim.advance(*d);
                out.settlements.push(orch.settle());
            }
        }
    }
    out
}
