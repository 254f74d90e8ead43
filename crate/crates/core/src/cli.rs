// SPDX-License-Identifier: Apache-2.0

//! The `flow` command.
//!
//! Exit codes: 0 success, 1 static-check failure, 2 usage or configuration
//! error, 3 build failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::backend::{
    compute_dirty_set, emit_build_plan, export_makefile, run_flow, BuildPlan, BuildState, Outcome, RunOptions,
};
use crate::check::{check_graph, CheckReport, Location, Verdict};
use crate::flowspec::{load_flow, persist_param, persist_prebuilt, Flow, PrebuiltEntry, FLOW_FILE};
use crate::node::ParamValue;
use crate::stash::{ListedEntry, Stash};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUILD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "flow", version, about = "Check, build and share modular hardware flows")]
pub struct Cli {
    /// Flow file, or a directory holding `flow.yml`.
    #[arg(long, global = true, default_value = FLOW_FILE)]
    pub flow: PathBuf,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the static checks.
    Check {
        /// Treat undecidable checks as failures.
        #[arg(long)]
        strict: bool,
        /// One JSON object per check.
        #[arg(long)]
        json: bool,
        /// List passing checks too.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Check, then build what is out of date.
    Run {
        #[arg(short = 'j', long, default_value_t = 1)]
        jobs: usize,
        /// Build only this step and its upstream.
        #[arg(long)]
        step: Option<String>,
        /// Build even if static checks fail.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        keep_going: bool,
        /// Undecidable checks block the build and `shell()` conditions are refused.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        build_dir: Option<PathBuf>,
    },
    /// Show the state of every step.
    Status {
        #[arg(long)]
        json: bool,
        #[arg(long)]
        build_dir: Option<PathBuf>,
    },
    /// Print the graph in Graphviz format.
    Graph {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Edit parameters in the flow file.
    Param {
        #[command(subcommand)]
        action: ParamCmd,
    },
    /// Share built steps.
    Stash {
        /// Stash directory (default: $STASH_PATH).
        #[arg(long, global = true)]
        stash: Option<PathBuf>,
        #[command(subcommand)]
        action: StashCmd,
    },
    /// Print the build as a Makefile.
    Makefile {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ParamCmd {
    /// Set a parameter override.
    Set { node: String, key: String, value: String },
}

#[derive(Debug, Subcommand)]
pub enum StashCmd {
    /// Copy a clean step's outputs into the stash.
    Push {
        step: String,
        #[arg(long)]
        author: Option<String>,
        #[arg(short, long, default_value = "")]
        message: String,
        #[arg(long)]
        build_dir: Option<PathBuf>,
    },
    /// Use a stash entry in place of a step.
    Pull {
        id: String,
        /// Step to replace (default: the step the entry was pushed from).
        #[arg(long)]
        node: Option<String>,
    },
    /// List entries, newest first.
    List,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {{
        let _ = writeln!($w, $($arg)*);
    }};
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let mut io = Io { out, err };
    match dispatch(cli, &mut io) {
        Ok(code) => code,
        Err(msg) => {
            say!(io.err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn build_dir(flow: &Flow, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| flow.dir.join("build"))
}

fn stash_at(given: Option<PathBuf>) -> Result<Stash, String> {
    let root = match given {
        Some(p) => p,
        None => Stash::default_root().map_err(|e| e.to_string())?,
    };
    Stash::open(&root).map_err(|e| e.to_string())
}

/// Static checks plus structural problems, as one report.
fn full_check(flow: &Flow) -> CheckReport {
    let mut report = CheckReport::default();
    let validation = flow.graph.validate_graph();
    let here = |node: &str| Location {
        node: node.to_string(),
        file: flow.path.clone(),
        line: 0,
    };
    for c in &validation.cycles {
        report.push(format!("graph cycle {}", c.join(" -> ")), Verdict::Fail, "", here(&c[0]));
    }
    for p in &validation.dangling_inputs {
        report.push(format!("input {p}"), Verdict::Fail, "not driven by any output", here(&p.node));
    }
    if let Err(e) = crate::assertions::instrument_graph(&flow.graph) {
        for c in e.0 {
            report.push(
                format!("{}condition #{} `{}`", c.phase, c.index, c.source),
                Verdict::Fail,
                c.error.to_string(),
                here(&c.node),
            );
        }
    }
    if validation.cycles.is_empty() {
        report.extend(check_graph(&flow.graph, flow.tech.as_ref()));
    }
    report.sort();
    report
}

fn plan_for(flow: &Flow) -> Result<BuildPlan, String> {
    emit_build_plan(&flow.graph, None, true).map_err(|e| e.to_string())
}

fn write_or_print(io: &mut Io, output: Option<PathBuf>, text: &str) -> Result<i32, String> {
    match output {
        Some(p) => fs::write(&p, text).map_err(|e| format!("{}: {e}", p.display()))?,
        None => {
            let _ = write!(io.out, "{text}");
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct StatusLine<'a> {
    index: usize,
    step: &'a str,
    dir: &'a str,
    status: String,
    dirty: bool,
}

fn dispatch(cli: Cli, io: &mut Io) -> Result<i32, String> {
    let flow_path = cli.flow;
    let load = |p: &Path| load_flow(p).map_err(|e| e.to_string());
    match cli.command {
        Cmd::Check { strict, json, verbose } => {
            let flow = load(&flow_path)?;
            let report = full_check(&flow);
            if json {
                let _ = write!(io.out, "{}", report.render_json_lines());
            } else {
                let _ = write!(io.out, "{}", report.render_text(verbose));
            }
            Ok(if report.is_failure(strict) { EXIT_CHECK } else { EXIT_OK })
        }
        Cmd::Run {
            jobs,
            step,
            force,
            keep_going,
            strict,
            build_dir: bd,
        } => {
            let flow = load(&flow_path)?;
            let report = full_check(&flow);
            if report.is_failure(strict) {
                if !force {
                    let _ = write!(io.err, "{}", report.render_text(false));
                    say!(io.err, "error: static checks failed; rerun with --force to build anyway");
                    return Ok(EXIT_CHECK);
                }
                say!(io.err, "warning: static checks failed; building anyway (--force)");
            }
            let plan = plan_for(&flow)?;
            let root = build_dir(&flow, bd);
            let opts = RunOptions {
                jobs,
                target: step,
                keep_going,
                allow_shell: !strict,
            };
            let result = run_flow(&plan, &root, &opts).map_err(|e| e.to_string())?;
            for s in &result.steps {
                let dir = &plan.steps[s.index].dir;
                match &s.outcome {
                    Outcome::Built => {
                        let secs = match (s.start, s.end) {
                            (Some(a), Some(b)) => (b - a).as_secs_f64(),
                            _ => 0.0,
                        };
                        say!(io.out, "built    {dir} ({secs:.2}s)");
                    }
                    Outcome::Failed(_) => say!(io.out, "FAILED   {dir}"),
                    Outcome::Skipped => say!(io.out, "skipped  {dir}"),
                    Outcome::UpToDate | Outcome::PreBuilt => {}
                }
            }
            for e in &result.errors {
                say!(io.err, "error: {e}");
            }
            say!(io.out, "{} steps executed", result.executed);
            Ok(if result.is_success() { EXIT_OK } else { EXIT_BUILD })
        }
        Cmd::Status { json, build_dir: bd } => {
            let flow = load(&flow_path)?;
            let plan = plan_for(&flow)?;
            let root = build_dir(&flow, bd);
            let state = BuildState::load(&root).map_err(|e| e.to_string())?;
            let dirty = compute_dirty_set(&plan, &state, &root).map_err(|e| e.to_string())?;
            for s in &plan.steps {
                let status = if s.prebuilt.is_some() {
                    "pre-built".to_string()
                } else {
                    state.status(&s.name).to_string()
                };
                let line = StatusLine {
                    index: s.index,
                    step: &s.name,
                    dir: &s.dir,
                    status,
                    dirty: dirty.contains(&s.name),
                };
                if json {
                    say!(io.out, "{}", serde_json::to_string(&line).expect("status serializes"));
                } else {
                    let mark = if line.dirty { "  (out of date)" } else { "" };
                    say!(io.out, "{:<32} {}{}", line.dir, line.status, mark);
                }
            }
            Ok(EXIT_OK)
        }
        Cmd::Graph { output } => {
            let flow = load(&flow_path)?;
            let dot = flow.graph.export_dot().map_err(|e| e.to_string())?;
            write_or_print(io, output, &dot)
        }
        Cmd::Makefile { output } => {
            let flow = load(&flow_path)?;
            let plan = plan_for(&flow)?;
            write_or_print(io, output, &export_makefile(&plan))
        }
        Cmd::Param {
            action: ParamCmd::Set { node, key, value },
        } => {
            let path = resolve_flow_file(&flow_path);
            let v = ParamValue::parse_literal(&value);
            persist_param(&path, &node, &key, v.clone()).map_err(|e| e.to_string())?;
            say!(io.out, "{node}.{key} = {}", v.render());
            Ok(EXIT_OK)
        }
        Cmd::Stash { stash, action } => {
            let st = stash_at(stash)?;
            match action {
                StashCmd::Push {
                    step,
                    author,
                    message,
                    build_dir: bd,
                } => {
                    let flow = load(&flow_path)?;
                    let plan = plan_for(&flow)?;
                    let root = build_dir(&flow, bd);
                    let author = author
                        .or_else(|| std::env::var("USER").ok())
                        .unwrap_or_else(|| "unknown".into());
                    let meta = st.push(&plan, &root, &step, &author, &message).map_err(|e| e.to_string())?;
                    say!(io.out, "{}", meta.id);
                    Ok(EXIT_OK)
                }
                StashCmd::Pull { id, node } => {
                    let meta = st.verify(&id).map_err(|e| e.to_string())?;
                    let node = node.unwrap_or(meta.node);
                    let path = resolve_flow_file(&flow_path);
                    persist_prebuilt(
                        &path,
                        PrebuiltEntry {
                            node: node.clone(),
                            id: id.clone(),
                            stash: Some(st.root().to_path_buf()),
                        },
                    )
                    .map_err(|e| e.to_string())?;
                    say!(io.out, "{node} now pre-built from {id}");
                    Ok(EXIT_OK)
                }
                StashCmd::List => {
                    for e in st.list().map_err(|e| e.to_string())? {
                        match e {
                            ListedEntry::Ok(m) => {
                                say!(io.out, "{}  {}  {:<24} {:<12} {}", m.id, m.timestamp, m.node, m.author, m.message)
                            }
                            ListedEntry::Corrupt { id, reason } => say!(io.out, "{id}  CORRUPT  {reason}"),
                        }
                    }
                    Ok(EXIT_OK)
                }
            }
        }
    }
}

fn resolve_flow_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(FLOW_FILE)
    } else {
        p.to_path_buf()
    }
}
