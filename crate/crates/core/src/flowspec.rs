// SPDX-License-Identifier: Apache-2.0

//! Declarative flow description, `flow.yml`.
//!
//! ```yaml
//! design_name: gcd
//! nodes:
//!   - nodes/adk
//!   - nodes/synth
//!   - { path: nodes/synth, name: synth-alt }
//! connect_by_name:
//!   - [adk, synth]
//! connect:
//!   - "synth.design.v -> place.design.v"
//! parameters:
//!   synth: { clock_period: [1.0, 1.5, 2.0] }
//! assertions:
//!   synth: { post: ['exists("outputs/design.v")'] }
//! sweeps:
//!   - [synth, clock_period]
//! tech: tech.yml
//! prebuilt:
//!   - { node: place, id: k3j9x0a1b }
//! ```
//!
//! Sections are applied in the order shown. Node paths, `tech` and stash
//! roots resolve against the directory holding `flow.yml`; `tech`
//! defaults to a `tech.yml` beside it when that file exists.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::check::{load_technology_interface, TechError, TechnologyInterface};
use crate::graph::{FlowGraph, GraphError, PortRef};
use crate::node::{parse_node_config, NodeError, ParamValue};
use crate::stash::{Stash, StashError};

pub const FLOW_FILE: &str = "flow.yml";
pub const TECH_FILE: &str = "tech.yml";

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("{}: flow file not found", .0.display())]
    MissingFlowFile(PathBuf),
    #[error("{}:{line}: malformed flow file: {message}", path.display())]
    MalformedFlow {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("{context}: {source}")]
    Graph {
        context: String,
        #[source]
        source: GraphError,
    },
    #[error(transparent)]
    Tech(#[from] TechError),
    #[error(transparent)]
    Stash(#[from] StashError),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeEntry {
    Path(PathBuf),
    Named { path: PathBuf, name: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conditions {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pre: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub post: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrebuiltEntry {
    pub node: String,
    pub id: String,
    /// Stash root; defaults to `$STASH_PATH`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stash: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(default)]
    pub design_name: String,
    #[serde(default)]
    pub nodes: Vec<NodeEntry>,
    #[serde(default)]
    pub connect_by_name: Vec<(String, String)>,
    #[serde(default)]
    pub connect: Vec<String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, BTreeMap<String, ParamValue>>,
    #[serde(default)]
    pub assertions: BTreeMap<String, Conditions>,
    #[serde(default)]
    pub sweeps: Vec<(String, String)>,
    #[serde(default)]
    pub tech: Option<PathBuf>,
    #[serde(default)]
    pub prebuilt: Vec<PrebuiltEntry>,
}

/// A loaded flow: the spec, the graph it elaborates to, and the technology
/// interface if one is configured.
#[derive(Debug, Clone)]
pub struct Flow {
    pub spec: FlowSpec,
    pub path: PathBuf,
    pub dir: PathBuf,
    pub graph: FlowGraph,
    pub tech: Option<TechnologyInterface>,
    pub tech_path: Option<PathBuf>,
}

fn graph_err(context: impl Into<String>) -> impl FnOnce(GraphError) -> FlowError {
    let context = context.into();
    move |source| FlowError::Graph { context, source }
}

/// Parse flow-file text. `path` labels errors.
pub fn parse_flow_text(text: &str, path: &Path) -> Result<FlowSpec, FlowError> {
    serde_yaml::from_str(text).map_err(|e| FlowError::MalformedFlow {
        path: path.to_path_buf(),
        line: e.location().map_or(0, |l| l.line()),
        message: e.to_string(),
    })
}

/// Read `flow.yml` (or the flow file at `path`) and elaborate it.
pub fn load_flow(path: &Path) -> Result<Flow, FlowError> {
    let path = if path.is_dir() { path.join(FLOW_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&path).map_err(|_| FlowError::MissingFlowFile(path.clone()))?;
    let spec = parse_flow_text(&text, &path)?;
    elaborate(spec, &path)
}

/// Build the graph described by `spec`, whose file lives at `path`.
pub fn elaborate(spec: FlowSpec, path: &Path) -> Result<Flow, FlowError> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    let mut g = FlowGraph::new();

    for entry in &spec.nodes {
        let (rel, name) = match entry {
            NodeEntry::Path(p) => (p, None),
            NodeEntry::Named { path, name } => (path, Some(name.as_str())),
        };
        let cfg = parse_node_config(&dir.join(rel))?;
        let label = name.unwrap_or(&cfg.name).to_string();
        g.add_node(cfg, name).map_err(graph_err(format!("nodes: {label}")))?;
    }
    for (src, dst) in &spec.connect_by_name {
        g.connect_by_name(src, dst)
            .map_err(graph_err(format!("connect_by_name: [{src}, {dst}]")))?;
    }
    for line in &spec.connect {
        let bad = || FlowError::MalformedFlow {
            path: path.to_path_buf(),
            line: 0,
            message: format!("connect entry `{line}` is not of the form `a.port -> b.port`"),
        };
        let (s, d) = line.split_once("->").ok_or_else(bad)?;
        let src = PortRef::parse(s).ok_or_else(bad)?;
        let dst = PortRef::parse(d).ok_or_else(bad)?;
        g.connect(src, dst).map_err(graph_err(format!("connect: {line}")))?;
    }
    for (node, params) in &spec.parameters {
        for (k, v) in params {
            g.set_param(node, k, v.clone())
                .map_err(graph_err(format!("parameters: {node}.{k}")))?;
        }
    }
    for (node, conds) in &spec.assertions {
        for c in &conds.pre {
            g.append_pre(node, c.clone()).map_err(graph_err(format!("assertions: {node}")))?;
        }
        for c in &conds.post {
            g.append_post(node, c.clone()).map_err(graph_err(format!("assertions: {node}")))?;
        }
    }
    for (node, key) in &spec.sweeps {
        g.expand_parameter_sweep(node, key)
            .map_err(graph_err(format!("sweeps: [{node}, {key}]")))?;
    }
    for p in &spec.prebuilt {
        let root = match &p.stash {
            Some(r) => dir.join(r),
            None => Stash::default_root()?,
        };
        let stash = Stash::open(&root)?;
        g.mark_prebuilt(&p.node, &p.id, &stash)
            .map_err(graph_err(format!("prebuilt: {}", p.node)))?;
    }

    let tech_path = match &spec.tech {
        Some(t) => Some(dir.join(t)),
        None => Some(dir.join(TECH_FILE)).filter(|p| p.is_file()),
    };
    let tech = tech_path.as_deref().map(load_technology_interface).transpose()?;

    Ok(Flow {
        spec,
        path: path.to_path_buf(),
        dir,
        graph: g,
        tech,
        tech_path,
    })
}

fn mapping_entry<'a>(
    map: &'a mut serde_yaml::Mapping,
    key: &str,
    default: serde_yaml::Value,
) -> &'a mut serde_yaml::Value {
    let v = map.entry(key.into()).or_insert_with(|| default.clone());
    if v.is_null() {
        *v = default;
    }
    v
}

/// Apply `edit` to the flow file's YAML document, elaborate the result, and
/// write it back only if that succeeds. Comments are not preserved.
pub fn edit_flow(
    path: &Path,
    edit: impl FnOnce(&mut serde_yaml::Mapping) -> Result<(), String>,
) -> Result<Flow, FlowError> {
    let text = fs::read_to_string(path).map_err(|_| FlowError::MissingFlowFile(path.to_path_buf()))?;
    let malformed = |message: String| FlowError::MalformedFlow {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    let mut doc: serde_yaml::Value = serde_yaml::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if doc.is_null() {
        doc = serde_yaml::Value::Mapping(Default::default());
    }
    let root = doc
        .as_mapping_mut()
        .ok_or_else(|| malformed("top level is not a mapping".into()))?;
    edit(root).map_err(malformed)?;
    let new_text = serde_yaml::to_string(&doc).expect("flow serializes");
    let flow = elaborate(parse_flow_text(&new_text, path)?, path)?;
    fs::write(path, new_text).map_err(|e| FlowError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(flow)
}

/// Persist `parameters.<node>.<key> = value` into the flow file.
pub fn persist_param(path: &Path, node: &str, key: &str, value: ParamValue) -> Result<Flow, FlowError> {
    edit_flow(path, |root| {
        let empty = || serde_yaml::Value::Mapping(Default::default());
        let per_node = mapping_entry(
            mapping_entry(root, "parameters", empty())
                .as_mapping_mut()
                .ok_or("`parameters` is not a mapping")?,
            node,
            empty(),
        );
        per_node
            .as_mapping_mut()
            .ok_or_else(|| format!("`parameters.{node}` is not a mapping"))?
            .insert(key.into(), serde_yaml::to_value(&value).expect("parameter serializes"));
        Ok(())
    })
}

/// Record in the flow file that `entry.node` is served from the stash,
/// replacing any earlier entry for the same node.
pub fn persist_prebuilt(path: &Path, entry: PrebuiltEntry) -> Result<Flow, FlowError> {
    edit_flow(path, |root| {
        let list = mapping_entry(root, "prebuilt", serde_yaml::Value::Sequence(Vec::new()))
            .as_sequence_mut()
            .ok_or("`prebuilt` is not a list")?;
        list.retain(|v| v.get("node").and_then(|n| n.as_str()) != Some(entry.node.as_str()));
        list.push(serde_yaml::to_value(&entry).expect("entry serializes"));
        Ok(())
    })
}
