use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use tlawb_cli::rundir::{check_command, export_graph_command, CheckArgs, RunDir};
use tlawb_cli::server::{serve, DEFAULT_PORT};
use tlawb_cli::{explore_command, parse_log, CliError, EXIT_OK, EXIT_SPEC, EXIT_USAGE};
use tlawb_cloud::scenario::{bundled, parse_duration};
use tlawb_cloud::{headless_run, HeadlessOptions, DEFAULT_GRACE};
use tlawb_core::engine::{CheckOptions, GraphFormat};

#[derive(Parser)]
#[command(name = "tlawb", version, about = "Explicit-state model checking workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    spec: PathBuf,
    config: PathBuf,
    /// Run directory; defaults to `<spec name>.run`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the state graph and export it into the run directory.
    #[arg(long)]
    retain_graph: bool,
    /// Do not report states without successors.
    #[arg(long)]
    no_deadlock: bool,
    /// Label dot nodes with full state values instead of fingerprints.
    #[arg(long)]
    full_values: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model and write a run directory.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        profile: bool,
    },
    /// Check with profiling on and export the profile tables.
    Profile {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluate trace expressions at every state of a trace.
    Explore {
        /// Trace as trace state statements, e.g. a run's trace.wire.
        trace: PathBuf,
        /// One expression per line, `name == expr` for named ones.
        expressions: PathBuf,
        /// The module the trace came from, making its definitions available.
        #[arg(long, requires = "config")]
        spec: Option<PathBuf>,
        #[arg(long, requires = "spec")]
        config: Option<PathBuf>,
    },
    /// Summarize a wire log read from a file or standard input.
    ParseLog { file: Option<PathBuf> },
    /// Print a run's state graph.
    ExportGraph {
        run: PathBuf,
        /// `dot` or `edge-csv`.
        #[arg(long, default_value = "dot", value_parser = parse_format)]
        format: GraphFormat,
        #[arg(long)]
        full_values: bool,
    },
    /// Check a model on cloud instances.
    CloudRun {
        spec: PathBuf,
        config: PathBuf,
        #[arg(long, default_value = "simulated")]
        provider: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value = "results@localhost")]
        mail: String,
        #[arg(long, default_value = "tlawb")]
        tag: String,
        /// A bundled scenario name or a scenario file.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Idle time before instances terminate themselves, e.g. `600s`.
        #[arg(long, value_parser = parse_grace)]
        grace: Option<Duration>,
    },
    /// Serve a run directory's HTTP API on the loopback interface.
    Serve {
        run: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
    },
}

fn parse_format(s: &str) -> Result<GraphFormat, String> {
    GraphFormat::parse(s).ok_or_else(|| format!("unknown format `{s}` (dot, edge-csv)"))
}

fn parse_grace(s: &str) -> Result<Duration, String> {
    parse_duration(s).ok_or_else(|| format!("bad duration `{s}`"))
}

impl ModelArgs {
    fn into_check(self, profile: bool) -> CheckArgs {
        let out = self.out.unwrap_or_else(|| {
            let stem = self.spec.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
            PathBuf::from(format!("{stem}.run"))
        });
        CheckArgs {
            options: CheckOptions {
                seed: self.seed,
                workers: self.workers.max(1),
                profile,
                retain_graph: self.retain_graph,
                check_deadlock: !self.no_deadlock,
                ..CheckOptions::default()
            },
            spec: self.spec,
            config: self.config,
            out,
            full_values: self.full_values,
        }
    }
}

/// Writes to standard output; a closed pipe is not an error.
fn out(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush());
}

fn fail(e: CliError) -> i32 {
    eprintln!("tlawb: {e}");
    e.exit_code()
}

fn check(args: CheckArgs, tables: bool) -> i32 {
    match check_command(&args) {
        Ok(report) => {
            out(&report.render());
            if tables {
                out(&format!("\nprofile tables written to {}\n", args.out.display()));
            }
            report.outcome.exit_code()
        }
        Err(e) => fail(e),
    }
}

fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Check { model, profile } => check(model.into_check(profile), false),
        Command::Profile { model } => check(model.into_check(true), true),
        Command::Explore { trace, expressions, spec, config } => {
            let base = spec.as_deref().zip(config.as_deref());
            match explore_command(&trace, &expressions, base) {
                Ok(x) => {
                    out(&x.render());
                    EXIT_OK
                }
                Err(e) => fail(e),
            }
        }
        Command::ParseLog { file } => {
            let bytes = match file {
                Some(p) => std::fs::read(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
                None => {
                    let mut b = Vec::new();
                    std::io::stdin().read_to_end(&mut b).map(|_| b).map_err(|e| CliError::Input(e.to_string()))
                }
            };
            match bytes {
                Ok(b) => {
                    let (summary, err) = parse_log(&b);
                    out(&summary);
                    match err {
                        Some(e) => {
                            eprintln!("tlawb: {e}");
                            EXIT_SPEC
                        }
                        None => EXIT_OK,
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::ExportGraph { run, format, full_values } => {
            match RunDir::open(run).and_then(|d| export_graph_command(&d, format, full_values)) {
                Ok(text) => {
                    out(&text);
                    EXIT_OK
                }
                Err(e) => fail(e),
            }
        }
        Command::CloudRun { spec, config, provider, count, mail, tag, scenario, seed, workers, grace } => {
            let scenario = match scenario {
                None => None,
                Some(s) => match bundled(&s) {
                    Some(text) => Some(text.to_string()),
                    None => match std::fs::read_to_string(&s) {
                        Ok(t) => Some(t),
                        Err(e) => return fail(CliError::Input(format!("scenario {s}: {e}"))),
                    },
                },
            };
            let opts = HeadlessOptions {
                provider,
                count,
                mail,
                tag,
                seed,
                workers,
                grace: grace.unwrap_or(DEFAULT_GRACE),
                scenario,
                ..HeadlessOptions::new(spec, config)
            };
            headless_run(&opts, &mut std::io::stdout(), &mut std::io::stderr())
        }
        Command::Serve { run, port } => {
            let dir = match RunDir::open(run) {
                Ok(d) => d,
                Err(e) => return fail(e),
            };
            eprintln!("serving {} on http://127.0.0.1:{port}", dir.path.display());
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => return fail(CliError::Internal(e.to_string())),
            };
            match rt.block_on(serve(dir, port)) {
                Ok(()) => EXIT_OK,
                Err(e) => fail(CliError::Internal(format!("serve: {e}"))),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    ExitCode::from(run(cli) as u8)
}
