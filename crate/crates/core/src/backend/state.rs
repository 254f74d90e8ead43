// SPDX-License-Identifier: Apache-2.0

//! The `.flow-state` file: one JSON header line, then one record per step.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plan::{BuildPlan, PlanStep};
use super::BuildError;
use crate::hash::ALGORITHM;
use crate::node::node_content_hash;

pub const STATE_FILE: &str = ".flow-state";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepStatus {
    NeverBuilt,
    Clean,
    /// Started but not finished; also what an interrupted step looks like.
    Dirty,
    Failed,
    PreBuilt,
}

impl std::fmt::Display for StepStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepStatus::NeverBuilt => "never-built",
            StepStatus::Clean => "clean",
            StepStatus::Dirty => "dirty",
            StepStatus::Failed => "failed",
            StepStatus::PreBuilt => "pre-built",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    Symlink,
    Copy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: String,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    /// Output port to content hash.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<InputMode>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    algorithm: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildState {
    records: BTreeMap<String, StepRecord>,
}

impl BuildState {
    /// Read the state under `root`. A missing file, or one written with a
    /// different hash algorithm, yields an empty state.
    pub fn load(root: &Path) -> Result<Self, BuildError> {
        let path = root.join(STATE_FILE);
        let Ok(text) = fs::read_to_string(&path) else {
            return Ok(Self::default());
        };
        let corrupt = |line: usize, message: String| BuildError::StateCorrupt {
            path: path.clone(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, first)) = lines.next() else {
            return Ok(Self::default());
        };
        let header: Header = serde_json::from_str(first).map_err(|e| corrupt(1, e.to_string()))?;
        if header.algorithm != ALGORITHM || header.version != FORMAT_VERSION {
            return Ok(Self::default());
        }
        let mut records = BTreeMap::new();
        for (i, line) in lines {
            let r: StepRecord = serde_json::from_str(line).map_err(|e| corrupt(i + 1, e.to_string()))?;
            records.insert(r.step.clone(), r);
        }
        Ok(BuildState { records })
    }

    /// Write atomically (temporary file, then rename).
    pub fn save(&self, root: &Path) -> Result<(), BuildError> {
        let path = root.join(STATE_FILE);
        let tmp = root.join(format!("{STATE_FILE}.tmp"));
        let io = |e: std::io::Error| BuildError::Io {
            path: path.clone(),
            message: e.to_string(),
        };
        let mut f = fs::File::create(&tmp).map_err(io)?;
        let header = Header {
            format: "flow-state".into(),
            version: FORMAT_VERSION,
            algorithm: ALGORITHM.into(),
        };
        let mut text = serde_json::to_string(&header).expect("header serializes");
        text.push('\n');
        for r in self.records.values() {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        f.write_all(text.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)
    }

    pub fn get(&self, step: &str) -> Option<&StepRecord> {
        self.records.get(step)
    }

    pub fn status(&self, step: &str) -> StepStatus {
        self.records.get(step).map_or(StepStatus::NeverBuilt, |r| r.status)
    }

    pub fn set(&mut self, record: StepRecord) {
        self.records.insert(record.step.clone(), record);
    }

    pub fn records(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.values()
    }
}

/// Content hash of the output `port` of `step` as last recorded.
fn recorded_output(plan: &BuildPlan, state: &BuildState, step: &str, port: &str) -> Option<String> {
    let s = plan.step(step)?;
    if let Some(p) = &s.prebuilt {
        return p.output_hashes.get(port).cloned();
    }
    let r = state.get(step)?;
    if r.status != StepStatus::Clean {
        return None;
    }
    r.outputs.get(port).cloned()
}

/// The hash `step` would be recorded under if built now, or `None` when an
/// upstream output has no recorded hash yet.
pub fn step_hash(plan: &BuildPlan, state: &BuildState, step: &PlanStep) -> Result<Option<String>, BuildError> {
    if let Some(p) = &step.prebuilt {
        return Ok(Some(p.content_hash.clone()));
    }
    let mut upstream = Vec::with_capacity(step.inputs.len());
    for b in &step.inputs {
        match recorded_output(plan, state, &b.from_step, &b.from_port) {
            Some(h) => upstream.push(h),
            None => return Ok(None),
        }
    }
    Ok(Some(node_content_hash(&step.config, &upstream)?))
}

/// Steps that must run. A step is dirty when it has no clean record, when
/// its hash differs from the recorded one, when a declared output is
/// missing from disk, or when anything it reads from is dirty. Pre-built
/// steps are never dirty.
pub fn compute_dirty_set(plan: &BuildPlan, state: &BuildState, root: &Path) -> Result<BTreeSet<String>, BuildError> {
    let mut dirty = BTreeSet::new();
    for step in &plan.steps {
        if step.prebuilt.is_some() {
            continue;
        }
        let is_dirty = match state.get(&step.name) {
            Some(r) if r.status == StepStatus::Clean => {
                step.upstream().iter().any(|u| dirty.contains(*u))
                    || step_hash(plan, state, step)?.as_deref() != r.hash.as_deref()
                    || step
                        .outputs
                        .iter()
                        .any(|p| !root.join(&step.dir).join("outputs").join(p).exists())
            }
            _ => true,
        };
        if is_dirty {
            dirty.insert(step.name.clone());
        }
    }
    Ok(dirty)
}
