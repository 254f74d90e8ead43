// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::mpsc;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{SecondsFormat, Utc};

use super::exec::{execute_step, materialize_prebuilt, StepError, StepSuccess};
use super::plan::BuildPlan;
use super::state::{compute_dirty_set, step_hash, BuildState, StepRecord, StepStatus};
use super::BuildError;
use crate::assertions::EvalOptions;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; 0 is treated as 1.
    pub jobs: usize,
    /// Build only this step and what it reads from.
    pub target: Option<String>,
    /// Keep scheduling independent steps after a failure.
    pub keep_going: bool,
    /// Whether `shell(...)` conditions may run.
    pub allow_shell: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 1,
            target: None,
            keep_going: false,
            allow_shell: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Built,
    Failed(String),
    /// Not run because something upstream failed or the run stopped early.
    Skipped,
    UpToDate,
    PreBuilt,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub name: String,
    pub index: usize,
    pub outcome: Outcome,
    /// Offsets from the start of the run, for executed steps.
    pub start: Option<Duration>,
    pub end: Option<Duration>,
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    /// In plan order.
    pub steps: Vec<StepOutcome>,
    /// Steps whose commands were run, successfully or not.
    pub executed: usize,
    pub wall: Duration,
    pub errors: Vec<StepError>,
}

impl BuildReport {
    pub fn is_success(&self) -> bool {
        self.errors.is_empty() && !self.steps.iter().any(|s| s.outcome == Outcome::Skipped)
    }

    pub fn outcome(&self, step: &str) -> Option<&Outcome> {
        self.steps.iter().find(|s| s.name == step).map(|s| &s.outcome)
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Nanos, true)
}

type JobResult = (usize, Result<StepSuccess, StepError>, Duration, Duration);

/// Bring the build under `root` up to date with `plan`.
///
/// Only dirty steps run. Steps are dispatched in plan order as soon as
/// everything they read from is done, with at most `jobs` running at once.
/// The state file is written by this thread alone, before each step starts
/// and after it finishes.
pub fn run_flow(plan: &BuildPlan, root: &Path, opts: &RunOptions) -> Result<BuildReport, BuildError> {
    let t0 = Instant::now();
    fs::create_dir_all(root).map_err(|e| BuildError::Io {
        path: root.to_path_buf(),
        message: e.to_string(),
    })?;
    let root = fs::canonicalize(root).map_err(|e| BuildError::Io {
        path: root.to_path_buf(),
        message: e.to_string(),
    })?;
    let scope: BTreeSet<String> = match &opts.target {
        Some(t) => {
            if plan.step(t).is_none() {
                return Err(BuildError::NoSuchStep(t.clone()));
            }
            plan.ancestors_inclusive(t)
        }
        None => plan.steps.iter().map(|s| s.name.clone()).collect(),
    };

    let mut state = BuildState::load(&root)?;
    let dirty = compute_dirty_set(plan, &state, &root)?;
    let mut report = BuildReport::default();
    let mut outcomes: Vec<Option<StepOutcome>> = vec![None; plan.len()];
    let mut pending = BTreeSet::new();

    for step in plan.steps.iter().filter(|s| scope.contains(&s.name)) {
        let outcome = |o: Outcome| {
            Some(StepOutcome {
                name: step.name.clone(),
                index: step.index,
                outcome: o,
                start: None,
                end: None,
            })
        };
        if let Some(p) = &step.prebuilt {
            let mode = materialize_prebuilt(step, &root);
            match mode {
                Ok(mode) => {
                    if state.status(&step.name) != StepStatus::PreBuilt
                        || state.get(&step.name).and_then(|r| r.hash.as_deref()) != Some(p.content_hash.as_str())
                    {
                        state.set(StepRecord {
                            step: step.name.clone(),
                            status: StepStatus::PreBuilt,
                            hash: Some(p.content_hash.clone()),
                            outputs: p.output_hashes.clone(),
                            timestamp: now(),
                            inputs: Some(mode),
                        });
                    }
                    outcomes[step.index] = outcome(Outcome::PreBuilt);
                }
                Err(e) => {
                    outcomes[step.index] = outcome(Outcome::Failed(e.to_string()));
                    report.errors.push(e);
                }
            }
        } else if dirty.contains(&step.name) {
            pending.insert(step.index);
        } else {
            outcomes[step.index] = outcome(Outcome::UpToDate);
        }
    }
    state.save(&root)?;

    let jobs = opts.jobs.max(1);
    let eval = EvalOptions {
        allow_shell: opts.allow_shell,
    };
    let mut failed: BTreeSet<String> = report.errors.iter().map(|e| e.step().to_string()).collect();

    let (job_tx, job_rx) = mpsc::channel::<usize>();
    let (res_tx, res_rx) = mpsc::channel::<JobResult>();
    let job_rx = Mutex::new(job_rx);
    thread::scope(|s| -> Result<(), BuildError> {
        let root = &root;
        for _ in 0..jobs {
            let res_tx = res_tx.clone();
            let job_rx = &job_rx;
            s.spawn(move || loop {
                let next = job_rx.lock().expect("job queue lock").recv();
                let Ok(idx) = next else { break };
                let start = t0.elapsed();
                let result = execute_step(plan, &plan.steps[idx], root, eval);
                if res_tx.send((idx, result, start, t0.elapsed())).is_err() {
                    break;
                }
            });
        }
        drop(res_tx);

        let mut running = 0usize;
        let mut hashes: Vec<Option<String>> = vec![None; plan.len()];
        let mut stop = false;
        loop {
            // Drop steps whose upstream failed, then dispatch what is ready.
            let mut dispatched = true;
            while dispatched {
                dispatched = false;
                let mut blocked = Vec::new();
                let mut ready = None;
                for &idx in &pending {
                    let step = &plan.steps[idx];
                    let ups = step.upstream();
                    if ups.iter().any(|u| failed.contains(*u)) {
                        blocked.push(idx);
                    } else if ready.is_none()
                        && ups
                            .iter()
                            .all(|u| !pending.contains(&plan.step(u).expect("planned").index) && !is_running(&outcomes, plan, u))
                    {
                        ready = Some(idx);
                    }
                }
                for idx in blocked {
                    pending.remove(&idx);
                    failed.insert(plan.steps[idx].name.clone());
                    outcomes[idx] = Some(StepOutcome {
                        name: plan.steps[idx].name.clone(),
                        index: idx,
                        outcome: Outcome::Skipped,
                        start: None,
                        end: None,
                    });
                    dispatched = true;
                }
                if stop || running >= jobs {
                    continue;
                }
                if let Some(idx) = ready {
                    let step = &plan.steps[idx];
                    pending.remove(&idx);
                    hashes[idx] = step_hash(plan, &state, step)?;
                    state.set(StepRecord {
                        step: step.name.clone(),
                        status: StepStatus::Dirty,
                        hash: None,
                        outputs: Default::default(),
                        timestamp: now(),
                        inputs: None,
                    });
                    state.save(root)?;
                    outcomes[idx] = Some(StepOutcome {
                        name: step.name.clone(),
                        index: idx,
                        outcome: Outcome::Built,
                        start: None,
                        end: None,
                    });
                    job_tx.send(idx).expect("workers alive");
                    running += 1;
                    report.executed += 1;
                    dispatched = true;
                }
            }
            if running == 0 {
                break;
            }
            let (idx, result, start, end) = res_rx.recv().expect("workers alive");
            running -= 1;
            let step = &plan.steps[idx];
            let o = outcomes[idx].as_mut().expect("dispatched step has an outcome");
            o.start = Some(start);
            o.end = Some(end);
            match result {
                Ok(done) => {
                    state.set(StepRecord {
                        step: step.name.clone(),
                        status: StepStatus::Clean,
                        hash: hashes[idx].clone(),
                        outputs: done.outputs,
                        timestamp: now(),
                        inputs: done.input_mode,
                    });
                }
                Err(e) => {
                    o.outcome = Outcome::Failed(e.to_string());
                    state.set(StepRecord {
                        step: step.name.clone(),
                        status: StepStatus::Failed,
                        hash: None,
                        outputs: Default::default(),
                        timestamp: now(),
                        inputs: None,
                    });
                    failed.insert(step.name.clone());
                    report.errors.push(e);
                    if !opts.keep_going {
                        stop = true;
                    }
                }
            }
            state.save(root)?;
        }
        drop(job_tx);
        Ok(())
    })?;

    for idx in pending {
        outcomes[idx] = Some(StepOutcome {
            name: plan.steps[idx].name.clone(),
            index: idx,
            outcome: Outcome::Skipped,
            start: None,
            end: None,
        });
    }
    report.steps = outcomes.into_iter().flatten().collect();
    report.wall = t0.elapsed();
    Ok(report)
}

/// A dispatched step whose result has not come back yet.
fn is_running(outcomes: &[Option<StepOutcome>], plan: &BuildPlan, name: &str) -> bool {
    let idx = plan.step(name).expect("planned").index;
    matches!(&outcomes[idx], Some(o) if o.outcome == Outcome::Built && o.end.is_none())
}
