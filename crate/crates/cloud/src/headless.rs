use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use crate::lifecycle::{import_mail, CheckRequest, Orchestrator, RunConfig, DEFAULT_GRACE};
use crate::provider::Credentials;
use crate::scenario::{parse_scenario, run_scenario, Step};
use crate::sim::SimulatedProvider;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SPEC: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub const PROVIDERS: [&str; 1] = ["simulated"];

#[derive(Debug, Clone)]
pub struct HeadlessOptions {
    pub spec: PathBuf,
    pub config: PathBuf,
    pub provider: String,
    pub count: usize,
    pub mail: String,
    pub tag: String,
    pub seed: u64,
    pub workers: usize,
    pub grace: Duration,
    /// Scenario text; a plain single run when absent.
    pub scenario: Option<String>,
}

impl HeadlessOptions {
    pub fn new(spec: impl Into<PathBuf>, config: impl Into<PathBuf>) -> Self {
        HeadlessOptions {
            spec: spec.into(),
            config: config.into(),
            provider: "simulated".into(),
            count: 1,
            mail: "results@localhost".into(),
            tag: "tlawb".into(),
            seed: 0,
            workers: 1,
            grace: DEFAULT_GRACE,
            scenario: None,
        }
    }
}

/// Credentials for the simulated provider: the environment's if set,
/// placeholders otherwise.
fn simulated_credentials() -> Credentials {
    Credentials::from_env().unwrap_or_else(|_| Credentials::new("simulated", "simulated"))
}

/// Runs the whole lifecycle without interaction. The live wire stream goes
/// to `out`, diagnostics to `err`. The exit status is 0 iff the check
/// completed without finding a problem.
pub fn headless_run(opts: &HeadlessOptions, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if !PROVIDERS.contains(&opts.provider.as_str()) {
        let _ = writeln!(err, "unknown provider `{}` (available: {})", opts.provider, PROVIDERS.join(", "));
        return EXIT_USAGE;
    }
    let read = |p: &PathBuf| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    let (spec, config) = match (read(&opts.spec), read(&opts.config)) {
        (Ok(s), Ok(c)) => (s, c),
        (Err(e), _) | (_, Err(e)) => {
            let _ = writeln!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    let steps = match &opts.scenario {
        Some(text) => match parse_scenario(text) {
            Ok(s) => s,
            Err(e) => {
                let _ = writeln!(err, "{e}");
                return EXIT_USAGE;
            }
        },
        None => vec![Step::Run],
    };
    let credentials = simulated_credentials();
    let sim = SimulatedProvider::new(credentials.clone());
    let orch = Orchestrator::new(&sim, credentials, opts.grace);
    let cfg = RunConfig { tag: opts.tag.clone(), count: opts.count, mail: opts.mail.clone() };
    let req = CheckRequest { spec, config, seed: opts.seed, workers: opts.workers };
    let run = run_scenario(&sim, &orch, &cfg, &req, &steps);

    let mut code = EXIT_INTERNAL;
    for r in &run.runs {
        let phases: Vec<&str> = r.handle.phases.iter().map(|p| p.name()).collect();
        let _ = writeln!(err, "run on instances {:?}: {}", r.handle.instances, phases.join(" -> "));
        code = match &r.result {
            Err(e) => {
                let _ = writeln!(err, "cloud run failed: {e}");
                EXIT_INTERNAL
            }
            Ok(res) => {
                for c in &res.chunks {
                    let _ = out.write_all(c);
                }
                if res.status == EXIT_SPEC {
                    let _ = err.write_all(&res.mail.body);
                    EXIT_SPEC
                } else {
                    let report = match res.live_report() {
                        Ok(rep) => Ok(rep),
                        Err(_) if res.interrupted => {
                            let _ = writeln!(err, "connection lost; importing the mailed result");
                            import_mail(&res.mail).map_err(|e| e.to_string())
                        }
                        Err(e) => Err(e.to_string()),
                    };
                    match report {
                        Ok(rep) => {
                            let _ = writeln!(err, "outcome: {}", rep.outcome);
                            rep.outcome.exit_code()
                        }
                        Err(e) => {
                            let _ = writeln!(err, "no result: {e}");
                            EXIT_INTERNAL
                        }
                    }
                }
            }
        };
    }
    for (i, s) in run.settlements.iter().enumerate() {
        for (id, action) in s {
            let _ = writeln!(err, "after clock advance {}: instance {id} {action:?}", i + 1);
        }
    }
    code
}
