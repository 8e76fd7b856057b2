//! Command-line entry points and the local HTTP API.

pub mod rundir;
pub mod server;

use std::path::Path;

use tlawb_core::lang::CheckUnit;
use tlawb_core::traceexp::{explore, parse_expressions, ExploredTrace, TraceExpError};
use tlawb_core::wire::{parse_stream, summarize, MALFORMED};

pub use tlawb_cloud::{EXIT_INTERNAL, EXIT_OK, EXIT_SPEC, EXIT_USAGE, EXIT_VIOLATION};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CliError {
    /// Missing or unreadable input files and bad arguments.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Spec(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_USAGE,
            CliError::Spec(_) => EXIT_SPEC,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<TraceExpError> for CliError {
    fn from(e: TraceExpError) -> Self {
        match e {
            TraceExpError::Module(m) => CliError::Internal(m),
            other => CliError::Spec(other.to_string()),
        }
    }
}

/// Explores a trace file with an expressions file, optionally against the
/// module the trace came from.
pub fn explore_command(trace: &Path, expressions: &Path, base: Option<(&Path, &Path)>) -> Result<ExploredTrace, CliError> {
    let trace = rundir::read_trace(&std::fs::read(trace).map_err(|e| CliError::Input(format!("{}: {e}", trace.display())))?)?;
    let exprs = parse_expressions(&rundir::read_text(expressions)?)?;
    let unit: Option<CheckUnit> = match base {
        Some((spec, cfg)) => Some(rundir::load_unit(&rundir::read_text(spec)?, &rundir::read_text(cfg)?)?),
        None => None,
    };
    Ok(explore(unit.as_ref(), &trace, &exprs)?)
}

/// One summary line per message. A damaged stream still summarizes what
/// could be read; the error describes the damage.
pub fn parse_log(bytes: &[u8]) -> (String, Option<String>) {
    let (msgs, err) = parse_stream(bytes);
    let malformed = msgs.iter().filter(|m| m.code == MALFORMED).count();
    let err = err.map(|e| e.to_string()).or_else(|| (malformed > 0).then(|| format!("{malformed} malformed message(s)")));
    (summarize(&msgs), err)
}
