// SPDX-License-Identifier: Apache-2.0

//! Lowering a graph to an incremental build and running it.
//!
//! A step is rebuilt only when its content hash (configuration, package
//! files, and the recorded hashes of the outputs it reads) changes, or when
//! something upstream is rebuilt.

mod exec;
mod makefile;
mod plan;
mod schedule;
mod state;

use std::path::PathBuf;

use thiserror::Error;

use crate::assertions::InstrumentError;
use crate::graph::{GraphError, PortRef};
use crate::node::NodeError;

pub use exec::{execute_step, materialize_prebuilt, StepError, StepSuccess, LOG_FILE};
pub use makefile::export_makefile;
pub use plan::{emit_build_plan, BuildPlan, InputBinding, PlanStep};
pub use schedule::{run_flow, BuildReport, Outcome, RunOptions, StepOutcome};
pub use state::{compute_dirty_set, step_hash, BuildState, InputMode, StepRecord, StepStatus, STATE_FILE};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("GraphCycle: {}", .0.join(" -> "))]
    GraphCycle(Vec<String>),
    #[error("undriven inputs: {}", .0.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", "))]
    DanglingInputs(Vec<PortRef>),
    #[error("StaticCheckFailed: {0} static check(s) failed")]
    StaticCheckFailed(usize),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("no step named `{0}`")]
    NoSuchStep(String),
    #[error("{}:{line}: corrupt build state: {message}", path.display())]
    StateCorrupt { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}
