// SPDX-License-Identifier: Apache-2.0

//! Running one step inside its own directory.
//!
//! ```text
//! <build>/<index>-<name>/
//!   <package files>
//!   inputs/<port>    -> <build>/<upstream>/outputs/<port>
//!   outputs/<port>
//!   logs/run.log
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use thiserror::Error;
use walkdir::WalkDir;

use super::plan::{BuildPlan, PlanStep};
use super::state::InputMode;
use crate::assertions::{eval_check, CheckExpr, CheckResult, CheckVerdict, EvalOptions, Phase};
use crate::hash::hash_path;

pub const LOG_FILE: &str = "logs/run.log";
const RESERVED: [&str; 3] = ["inputs", "outputs", "logs"];

#[derive(Debug, Clone, Error)]
pub enum StepError {
    #[error("[{step}] PreconditionFailed: {}", summarize(.results))]
    PreconditionFailed { step: String, results: Vec<CheckResult> },
    #[error("[{step}] CommandFailed: `{command}` exited with {} (see {})", code.map_or("a signal".to_string(), |c| format!("status {c}")), log.display())]
    CommandFailed {
        step: String,
        command: String,
        code: Option<i32>,
        log: PathBuf,
    },
    #[error("[{step}] MissingOutput: outputs/{port} was not produced")]
    MissingOutput { step: String, port: String },
    #[error("[{step}] PostconditionFailed: {}", summarize(.results))]
    PostconditionFailed { step: String, results: Vec<CheckResult> },
    #[error("[{step}] {message}")]
    Io { step: String, message: String },
}

impl StepError {
    pub fn step(&self) -> &str {
        match self {
            StepError::PreconditionFailed { step, .. }
            | StepError::CommandFailed { step, .. }
            | StepError::MissingOutput { step, .. }
            | StepError::PostconditionFailed { step, .. }
            | StepError::Io { step, .. } => step,
        }
    }
}

fn summarize(results: &[CheckResult]) -> String {
    results
        .iter()
        .filter(|r| r.verdict != CheckVerdict::Pass)
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// What a successful step leaves behind.
#[derive(Debug, Clone)]
pub struct StepSuccess {
    pub outputs: BTreeMap<String, String>,
    pub input_mode: Option<InputMode>,
    pub checks: Vec<CheckResult>,
}

fn copy_tree(src: &Path, dst: &Path) -> io::Result<()> {
    if src.is_dir() {
        for entry in WalkDir::new(src).follow_links(true) {
            let entry = entry.map_err(io::Error::other)?;
            let rel = entry.path().strip_prefix(src).expect("walk stays under root");
            let target = dst.join(rel);
            if entry.file_type().is_dir() {
                fs::create_dir_all(&target)?;
            } else {
                fs::copy(entry.path(), &target)?;
            }
        }
        Ok(())
    } else {
        fs::copy(src, dst).map(|_| ())
    }
}

/// Copy the package into `dir`, leaving out the reserved directory names.
fn stage_package(source: &Path, dir: &Path) -> io::Result<()> {
    if source.as_os_str().is_empty() || !source.is_dir() {
        return Ok(());
    }
    for entry in fs::read_dir(source)? {
        let entry = entry?;
        let name = entry.file_name();
        if RESERVED.iter().any(|r| name == *r) {
            continue;
        }
        copy_tree(&entry.path(), &dir.join(&name))?;
    }
    Ok(())
}

/// Link `target` at `link`, copying when links are unavailable.
fn materialize(target: &Path, link: &Path) -> io::Result<InputMode> {
    #[cfg(unix)]
    if std::os::unix::fs::symlink(target, link).is_ok() {
        return Ok(InputMode::Symlink);
    }
    copy_tree(target, link)?;
    Ok(InputMode::Copy)
}

fn run_checks(step: &str, phase: Phase, exprs: &[CheckExpr], dir: &Path, opts: EvalOptions) -> (Vec<CheckResult>, bool) {
    let results: Vec<_> = exprs.iter().map(|e| eval_check(e, dir, step, phase, opts)).collect();
    let ok = results.iter().all(|r| r.verdict == CheckVerdict::Pass);
    (results, ok)
}

/// Build `step` under `root` (an absolute path). Upstream steps must
/// already have their outputs in place.
pub fn execute_step(plan: &BuildPlan, step: &PlanStep, root: &Path, opts: EvalOptions) -> Result<StepSuccess, StepError> {
    let dir = root.join(&step.dir);
    let io = |what: &str, e: io::Error| StepError::Io {
        step: step.name.clone(),
        message: format!("{what}: {e}"),
    };
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| io("cannot clear step directory", e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| io("cannot create step directory", e))?;
    stage_package(&step.config.source_dir, &dir).map_err(|e| io("cannot copy package", e))?;
    for sub in RESERVED {
        fs::create_dir_all(dir.join(sub)).map_err(|e| io("cannot create step directory", e))?;
    }

    let mut input_mode = None;
    for b in &step.inputs {
        let up = plan.step(&b.from_step).expect("binding refers to a planned step");
        let target = root.join(&up.dir).join("outputs").join(&b.from_port);
        let mode = materialize(&target, &dir.join("inputs").join(&b.port))
            .map_err(|e| io(&format!("cannot link input {}", b.port), e))?;
        input_mode = Some(match (input_mode, mode) {
            (Some(InputMode::Copy), _) | (_, InputMode::Copy) => InputMode::Copy,
            _ => InputMode::Symlink,
        });
    }

    let log_path = dir.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| io("cannot open log", e))?;

    let (mut checks, ok) = run_checks(&step.name, Phase::Pre, &step.pre, &dir, opts);
    if !ok {
        return Err(StepError::PreconditionFailed {
            step: step.name.clone(),
            results: checks,
        });
    }

    for cmd in &step.commands {
        writeln!(log, "+ {cmd}").map_err(|e| io("cannot write log", e))?;
        let out = log.try_clone().map_err(|e| io("cannot write log", e))?;
        let err = log.try_clone().map_err(|e| io("cannot write log", e))?;
        let status = Command::new("sh")
            .arg("-e")
            .arg("-c")
            .arg(cmd)
            .current_dir(&dir)
            .envs(step.params.iter().map(|(k, v)| (PlanStep::param_env(k), v)))
            .env("FLOW_STEP", &step.name)
            .stdin(Stdio::null())
            .stdout(out)
            .stderr(err)
            .status()
            .map_err(|e| io("cannot run sh", e))?;
        if !status.success() {
            return Err(StepError::CommandFailed {
                step: step.name.clone(),
                command: cmd.clone(),
                code: status.code(),
                log: log_path,
            });
        }
    }

    if step.commands.is_empty() {
        // A vendor package ships its outputs at the package root.
        for port in &step.outputs {
            let src = dir.join(port);
            if src.exists() {
                copy_tree(&src, &dir.join("outputs").join(port)).map_err(|e| io("cannot copy output", e))?;
            }
        }
    }

    for port in &step.outputs {
        if !dir.join("outputs").join(port).exists() {
            return Err(StepError::MissingOutput {
                step: step.name.clone(),
                port: port.clone(),
            });
        }
    }

    let (post, ok) = run_checks(&step.name, Phase::Post, &step.post, &dir, opts);
    checks.extend(post);
    if !ok {
        return Err(StepError::PostconditionFailed {
            step: step.name.clone(),
            results: checks,
        });
    }

    let mut outputs = BTreeMap::new();
    for port in &step.outputs {
        let h = hash_path(&dir.join("outputs").join(port)).map_err(|e| io("cannot hash output", e))?;
        outputs.insert(port.clone(), h);
    }
    Ok(StepSuccess {
        outputs,
        input_mode,
        checks,
    })
}

/// Point a pre-built step's `outputs/` at its stash payload. Nothing is
/// executed.
pub fn materialize_prebuilt(step: &PlanStep, root: &Path) -> Result<InputMode, StepError> {
    let prebuilt = step.prebuilt.as_ref().expect("step is pre-built");
    let dir = root.join(&step.dir);
    let io = |e: io::Error| StepError::Io {
        step: step.name.clone(),
        message: format!("cannot materialize stash payload: {e}"),
    };
    let outputs = dir.join("outputs");
    if let Ok(existing) = fs::read_link(&outputs) {
        if existing == prebuilt.payload_dir {
            return Ok(InputMode::Symlink);
        }
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io)?;
    }
    fs::create_dir_all(&dir).map_err(io)?;
    materialize(&prebuilt.payload_dir, &outputs).map_err(io)
}
