//! The on-disk layout of one check run.

use std::fs;
use std::path::{Path, PathBuf};

use tlawb_core::engine::{export_graph, export_nodes, CheckOptions, CheckReport, CheckRun, ErrorTrace, GraphFormat};
use tlawb_core::lang::{parse_config, parse_module, resolve, CheckUnit};
use tlawb_core::wire::{emit, parse_stream, report_from_stream, trace_from_messages, trace_messages};

use crate::CliError;

pub const SPEC_FILE: &str = "module.spec";
pub const CONFIG_FILE: &str = "model.cfg";
pub const OPTIONS_FILE: &str = "options.txt";
pub const LOG_FILE: &str = "log.wire";
pub const REPORT_FILE: &str = "report.txt";
pub const TIMING_FILE: &str = "timing.txt";
pub const EVAL_CSV: &str = "eval.csv";
pub const ACTIONS_CSV: &str = "actions.csv";
pub const CHAINS_CSV: &str = "chains.csv";
pub const QUEUE_CSV: &str = "queue.csv";
pub const GRAPH_DOT: &str = "graph.dot";
pub const GRAPH_CSV: &str = "graph.csv";
pub const NODES_CSV: &str = "nodes.csv";
pub const TRACE_FILE: &str = "trace.wire";
pub const EXPRESSIONS_CACHE: &str = "expressions.cache";

/// Artifacts a run writes only under some options or outcomes.
const OPTIONAL: [&str; 7] = [EVAL_CSV, ACTIONS_CSV, CHAINS_CSV, GRAPH_DOT, GRAPH_CSV, NODES_CSV, TRACE_FILE];

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| CliError::Internal(format!("{}: {e}", p.display())))
}

/// Parses and resolves a module against its model.
pub fn load_unit(spec: &str, config: &str) -> Result<CheckUnit, CliError> {
    let module = parse_module(spec).map_err(|e| CliError::Spec(format!("spec: {e}")))?;
    let cfg = parse_config(config).map_err(|e| CliError::Spec(format!("config: {e}")))?;
    resolve(&module, &cfg).map_err(|e| CliError::Spec(e.to_string()))
}

/// Options a run was made with, so it can be repeated.
fn render_options(o: &CheckOptions) -> String {
    format!(
        "seed: {}\nworkers: {}\nprofile: {}\nretain_graph: {}\ncheck_deadlock: {}\n",
        o.seed, o.workers, o.profile, o.retain_graph, o.check_deadlock
    )
}

fn parse_options(text: &str) -> Result<CheckOptions, CliError> {
    let mut o = CheckOptions::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let bad = || CliError::Input(format!("{OPTIONS_FILE}: bad line `{line}`"));
        let (k, v) = line.split_once(": ").ok_or_else(bad)?;
        let flag = || v.parse::<bool>().map_err(|_| bad());
        match k {
            "seed" => o.seed = v.parse().map_err(|_| bad())?,
            "workers" => o.workers = v.parse().map_err(|_| bad())?,
            "profile" => o.profile = flag()?,
            "retain_graph" => o.retain_graph = flag()?,
            "check_deadlock" => o.check_deadlock = flag()?,
            _ => return Err(bad()),
        }
    }
    Ok(o)
}

fn trace_wire(trace: &ErrorTrace, report: &CheckReport) -> String {
    trace_messages(trace, &report.variables).iter().map(|m| emit(m).expect("trace bodies are well formed")).collect()
}

/// Writes every artifact of `run` into `dir`, removing optional artifacts a
/// previous run left behind.
pub fn write_run(dir: &Path, spec: &str, config: &str, opts: &CheckOptions, run: &CheckRun, full_values: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    for name in OPTIONAL {
        let _ = fs::remove_file(dir.join(name));
    }
    let r = &run.report;
    write(dir, SPEC_FILE, spec)?;
    write(dir, CONFIG_FILE, config)?;
    write(dir, OPTIONS_FILE, render_options(opts))?;
    write(dir, LOG_FILE, tlawb_core::wire::emit_report(r))?;
    write(dir, REPORT_FILE, r.render())?;
    write(dir, TIMING_FILE, run.timing.render())?;
    write(dir, QUEUE_CSV, run.timing.queue_csv())?;
    if let Some(p) = &r.profile {
        write(dir, EVAL_CSV, p.eval_csv())?;
        write(dir, ACTIONS_CSV, p.actions_csv())?;
        write(dir, CHAINS_CSV, p.chains_csv())?;
    }
    if let Some(g) = &run.graph {
        write(dir, GRAPH_DOT, export_graph(Some(g), GraphFormat::Dot, full_values).expect("graph present"))?;
        write(dir, GRAPH_CSV, export_graph(Some(g), GraphFormat::EdgeCsv, false).expect("graph present"))?;
        write(dir, NODES_CSV, export_nodes(g))?;
    }
    if let Some(t) = &r.trace {
        write(dir, TRACE_FILE, trace_wire(t, r))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CheckArgs {
    pub spec: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
    pub options: CheckOptions,
    pub full_values: bool,
}

/// Checks a model and writes its run directory.
pub fn check_command(args: &CheckArgs) -> Result<CheckReport, CliError> {
    let spec = read_text(&args.spec)?;
    let config = read_text(&args.config)?;
    let unit = load_unit(&spec, &config)?;
    let run = tlawb_core::engine::check(&unit, &args.options);
    write_run(&args.out, &spec, &config, &args.options, &run, args.full_values)?;
    Ok(run.report)
}

/// A run directory opened for reading.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CliError> {
        let path = path.into();
        if !path.join(LOG_FILE).is_file() {
            return Err(CliError::Input(format!("{} is not a run directory (no {LOG_FILE})", path.display())));
        }
        Ok(RunDir { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.file(name).is_file()
    }

    pub fn read(&self, name: &str) -> Result<String, CliError> {
        read_text(&self.file(name))
    }

    pub fn report(&self) -> Result<CheckReport, CliError> {
        let bytes = fs::read(self.file(LOG_FILE)).map_err(|e| CliError::Input(format!("{LOG_FILE}: {e}")))?;
        report_from_stream(&bytes).map_err(|e| CliError::Input(format!("{LOG_FILE}: {e}")))
    }

    pub fn trace(&self) -> Result<ErrorTrace, CliError> {
        let text = self.read(TRACE_FILE)?;
        read_trace(text.as_bytes())
    }

    pub fn options(&self) -> Result<CheckOptions, CliError> {
        parse_options(&self.read(OPTIONS_FILE)?)
    }

    pub fn unit(&self) -> Result<CheckUnit, CliError> {
        load_unit(&self.read(SPEC_FILE)?, &self.read(CONFIG_FILE)?)
    }
}

/// Reads a trace from a stream of trace state statements.
pub fn read_trace(bytes: &[u8]) -> Result<ErrorTrace, CliError> {
    let (msgs, err) = parse_stream(bytes);
    if let Some(e) = err {
        return Err(CliError::Input(format!("trace: {e}")));
    }
    trace_from_messages(&msgs).map_err(|e| CliError::Input(format!("trace: {e}")))
}

/// The graph of a run in `format`. Runs that did not keep their graph are
/// repeated from the copied spec with retention on; the result is written
/// back into the directory.
pub fn export_graph_command(dir: &RunDir, format: GraphFormat, full_values: bool) -> Result<String, CliError> {
    let stored = match format {
        GraphFormat::Dot if !full_values => Some(GRAPH_DOT),
        GraphFormat::EdgeCsv => Some(GRAPH_CSV),
        GraphFormat::Dot => None,
    };
    if let Some(name) = stored.filter(|n| dir.has(n)) {
        return dir.read(name);
    }
    let unit = dir.unit()?;
    let opts = CheckOptions { retain_graph: true, ..dir.options()? };
    let run = tlawb_core::engine::check(&unit, &opts);
    let text = export_graph(run.graph.as_ref(), format, full_values).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(name) = stored {
        write(&dir.path, name, &text)?;
    }
    Ok(text)
}
