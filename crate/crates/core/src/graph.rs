// SPDX-License-Identifier: Apache-2.0

//! The flow graph: node instances joined by file-carrying edges.
//!
//! ```
//! use pdflow::{FlowGraph, NodeConfig, PortRef};
//!
//! let mut g = FlowGraph::new();
//! g.add_node(NodeConfig::new("synth").with_inputs(["rtl.v"]).with_outputs(["design.v"])
//!     .with_commands(["cp inputs/rtl.v outputs/design.v"]), None).unwrap();
//! g.add_node(NodeConfig::new("place").with_inputs(["design.v"]).with_outputs(["design.def"])
//!     .with_commands(["touch outputs/design.def"]), None).unwrap();
//! g.connect(PortRef::new("synth", "design.v"), PortRef::new("place", "design.v")).unwrap();
//! assert_eq!(g.topological_order().unwrap(), ["synth", "place"]);
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::node::{is_valid_name, NodeConfig, ParamValue, Scalar};

/// One side of an edge: a port declared by a node instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub node: String,
    pub port: String,
}

impl PortRef {
    pub fn new(node: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef {
            node: node.into(),
            port: port.into(),
        }
    }

    /// Parse `node.port`, splitting at the first dot (ports may contain
    /// dots, node names may not).
    pub fn parse(text: &str) -> Option<Self> {
        let (node, port) = text.trim().split_once('.')?;
        (!node.is_empty() && !port.is_empty()).then(|| PortRef::new(node, port))
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.port)
    }
}

/// A file flowing from an output port to an input port.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: PortRef,
    pub dst: PortRef,
}

/// Where a pre-built node's outputs come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prebuilt {
    pub stash_id: String,
    pub payload_dir: PathBuf,
    pub content_hash: String,
    /// Output port name to content hash, as recorded at push time.
    pub output_hashes: BTreeMap<String, String>,
}

/// Resolves stash ids for [`FlowGraph::mark_prebuilt`].
pub trait StashLookup {
    fn lookup(&self, stash_id: &str) -> Option<Prebuilt>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeInstance {
    pub config: NodeConfig,
    pub overrides: BTreeMap<String, ParamValue>,
    pub prebuilt: Option<Prebuilt>,
    pub extra_pre: Vec<String>,
    pub extra_post: Vec<String>,
}

impl NodeInstance {
    /// Node parameters with graph-level overrides applied.
    pub fn effective_params(&self) -> BTreeMap<String, ParamValue> {
        let mut params = self.config.parameters.clone();
        params.extend(self.overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        params
    }

    /// The configuration this instance actually builds with: merged
    /// parameters and graph-level conditions appended after the node's own.
    pub fn effective_config(&self) -> NodeConfig {
        let mut cfg = self.config.clone();
        cfg.parameters = self.effective_params();
        cfg.preconditions.extend(self.extra_pre.iter().cloned());
        cfg.postconditions.extend(self.extra_post.iter().cloned());
        cfg
    }

    pub fn param(&self, key: &str) -> Option<&ParamValue> {
        self.overrides
            .get(key)
            .or_else(|| self.config.parameters.get(key))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node `{0}` already exists")]
    DuplicateNode(String),
    #[error("no node named `{0}`")]
    NoSuchNode(String),
    #[error("instance name `{0}` must match [a-zA-Z0-9_-]+")]
    InvalidName(String),
    #[error("node `{node}` declares no port `{port}`")]
    NoSuchPort { node: String, port: String },
    #[error("`{port}` is {actual} of `{node}`, expected {expected}")]
    PortDirectionMismatch {
        node: String,
        port: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("input {0} is already driven by {1}")]
    InputAlreadyDriven(PortRef, PortRef),
    #[error("graph has a cycle through {}", .0.join(" -> "))]
    GraphCycle(Vec<String>),
    #[error("parameter `{key}` of `{node}` is not a list")]
    NotASweep { node: String, key: String },
    #[error("sweep would create `{0}`, which already exists")]
    SweepCollision(String),
    #[error("unknown stash id `{0}`")]
    UnknownStashId(String),
}

/// Result of [`FlowGraph::validate_graph`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Each cycle as a closed node sequence (`a -> b -> a`).
    pub cycles: Vec<Vec<String>>,
    /// Undriven inputs on nodes that are not pre-built.
    pub dangling_inputs: Vec<PortRef>,
    /// Outputs nothing consumes. Informational.
    pub unused_outputs: Vec<PortRef>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.cycles.is_empty() && self.dangling_inputs.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.cycles {
            writeln!(f, "error: cycle {}", c.join(" -> "))?;
        }
        for p in &self.dangling_inputs {
            writeln!(f, "error: input {p} is not driven")?;
        }
        for p in &self.unused_outputs {
            writeln!(f, "warning: output {p} is unused")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowGraph {
    nodes: BTreeMap<String, NodeInstance>,
    edges: BTreeSet<Edge>,
}

impl FlowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &BTreeMap<String, NodeInstance> {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Result<&NodeInstance, GraphError> {
        self.nodes
            .get(name)
            .ok_or_else(|| GraphError::NoSuchNode(name.to_string()))
    }

    fn node_mut(&mut self, name: &str) -> Result<&mut NodeInstance, GraphError> {
        self.nodes
            .get_mut(name)
            .ok_or_else(|| GraphError::NoSuchNode(name.to_string()))
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    /// Edges into `node`, ordered by the node's declared input order.
    pub fn incoming(&self, node: &str) -> Vec<&Edge> {
        let mut ins: Vec<&Edge> = self.edges.iter().filter(|e| e.dst.node == node).collect();
        if let Some(inst) = self.nodes.get(node) {
            let pos = |p: &str| inst.config.inputs.iter().position(|i| i == p);
            ins.sort_by_key(|e| pos(&e.dst.port));
        }
        ins
    }

    pub fn outgoing(&self, node: &str) -> Vec<&Edge> {
        self.edges.iter().filter(|e| e.src.node == node).collect()
    }

    fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> =
            self.nodes.keys().map(|k| (k.as_str(), BTreeSet::new())).collect();
        for e in &self.edges {
            succ.entry(e.src.node.as_str())
                .or_default()
                .insert(e.dst.node.as_str());
        }
        succ
    }

    /// `node` and everything reachable from it.
    pub fn downstream_closure(&self, node: &str) -> BTreeSet<String> {
        let succ = self.successors();
        let mut seen = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            if seen.insert(n.to_string()) {
                if let Some(next) = succ.get(n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        seen
    }

    /// Add an instance of `cfg` named `instance_name` (default: `cfg.name`).
    pub fn add_node(&mut self, cfg: NodeConfig, instance_name: Option<&str>) -> Result<&mut Self, GraphError> {
        let name = instance_name.unwrap_or(&cfg.name).to_string();
        if !is_valid_name(&name) {
            return Err(GraphError::InvalidName(name));
        }
        if self.nodes.contains_key(&name) {
            return Err(GraphError::DuplicateNode(name));
        }
        self.nodes.insert(
            name,
            NodeInstance {
                config: cfg,
                overrides: BTreeMap::new(),
                prebuilt: None,
                extra_pre: Vec::new(),
                extra_post: Vec::new(),
            },
        );
        Ok(self)
    }

    fn check_port(&self, p: &PortRef, want_output: bool) -> Result<(), GraphError> {
        let cfg = &self.node(&p.node)?.config;
        let (wanted, other) = if want_output {
            (&cfg.outputs, &cfg.inputs)
        } else {
            (&cfg.inputs, &cfg.outputs)
        };
        if wanted.contains(&p.port) {
            return Ok(());
        }
        if other.contains(&p.port) {
            let (expected, actual) = if want_output {
                ("an output", "an input")
            } else {
                ("an input", "an output")
            };
            return Err(GraphError::PortDirectionMismatch {
                node: p.node.clone(),
                port: p.port.clone(),
                expected,
                actual,
            });
        }
        Err(GraphError::NoSuchPort {
            node: p.node.clone(),
            port: p.port.clone(),
        })
    }

    fn driver(&self, dst: &PortRef) -> Option<&PortRef> {
        self.edges.iter().find(|e| &e.dst == dst).map(|e| &e.src)
    }

    /// Connect an output port to an input port.
    pub fn connect(&mut self, src: PortRef, dst: PortRef) -> Result<&mut Self, GraphError> {
        self.check_port(&src, true)?;
        self.check_port(&dst, false)?;
        if let Some(existing) = self.driver(&dst) {
            return Err(GraphError::InputAlreadyDriven(dst, existing.clone()));
        }
        self.edges.insert(Edge { src, dst });
        Ok(self)
    }

    /// Connect every undriven input of `dst` to the same-named output of
    /// `src`. Returns the number of edges added.
    pub fn connect_by_name(&mut self, src: &str, dst: &str) -> Result<usize, GraphError> {
        let outputs = self.node(src)?.config.outputs.clone();
        let inputs = self.node(dst)?.config.inputs.clone();
        let mut added = 0;
        for port in inputs.iter().filter(|p| outputs.contains(p)) {
            let d = PortRef::new(dst, port.clone());
            if self.driver(&d).is_none() {
                self.edges.insert(Edge {
                    src: PortRef::new(src, port.clone()),
                    dst: d,
                });
                added += 1;
            }
        }
        Ok(added)
    }

    /// Record a parameter override. Unknown keys are added.
    pub fn set_param(&mut self, node: &str, key: &str, value: impl Into<ParamValue>) -> Result<&mut Self, GraphError> {
        self.node_mut(node)?
            .overrides
            .insert(key.to_string(), value.into());
        Ok(self)
    }

    /// Append a graph-level precondition; runs after the node's own.
    pub fn append_pre(&mut self, node: &str, cond: impl Into<String>) -> Result<&mut Self, GraphError> {
        self.node_mut(node)?.extra_pre.push(cond.into());
        Ok(self)
    }

    /// Append a graph-level postcondition; runs after the node's own.
    pub fn append_post(&mut self, node: &str, cond: impl Into<String>) -> Result<&mut Self, GraphError> {
        self.node_mut(node)?.extra_post.push(cond.into());
        Ok(self)
    }

    pub fn validate_graph(&self) -> ValidationReport {
        let mut report = ValidationReport {
            cycles: self.cycles(),
            ..Default::default()
        };
        for (name, inst) in &self.nodes {
            for port in &inst.config.outputs {
                if !self.edges.iter().any(|e| e.src.node == *name && e.src.port == *port) {
                    report.unused_outputs.push(PortRef::new(name.clone(), port.clone()));
                }
            }
            if inst.prebuilt.is_some() {
                continue;
            }
            for port in &inst.config.inputs {
                let p = PortRef::new(name.clone(), port.clone());
                if self.driver(&p).is_none() {
                    report.dangling_inputs.push(p);
                }
            }
        }
        report
    }

    /// Every strongly connected component that contains a cycle, each
    /// rendered as a closed walk starting at its smallest node name.
    fn cycles(&self) -> Vec<Vec<String>> {
        let succ = self.successors();
        let mut out = Vec::new();
        for scc in tarjan(&succ) {
            let start = *scc.iter().next().unwrap();
            let self_loop = succ[start].contains(start);
            if scc.len() == 1 && !self_loop {
                continue;
            }
            if self_loop {
                out.push(vec![start.to_string(), start.to_string()]);
                continue;
            }
            // Shortest path back to `start` inside the component.
            let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
            let mut queue = VecDeque::from([start]);
            let mut last = None;
            'bfs: while let Some(n) = queue.pop_front() {
                for &m in &succ[n] {
                    if !scc.contains(m) {
                        continue;
                    }
                    if m == start {
                        last = Some(n);
                        break 'bfs;
                    }
                    if !parent.contains_key(m) {
                        parent.insert(m, n);
                        queue.push_back(m);
                    }
                }
            }
            let mut middle = Vec::new();
            let mut cur = last.expect("component has a cycle");
            while cur != start {
                middle.push(cur.to_string());
                cur = parent[cur];
            }
            middle.reverse();
            let mut path = vec![start.to_string()];
            path.extend(middle);
            path.push(start.to_string());
            out.push(path);
        }
        out.sort();
        out
    }

    /// Kahn's algorithm with lexicographic tie-breaking.
    pub fn topological_order(&self) -> Result<Vec<String>, GraphError> {
        let succ = self.successors();
        let mut indegree: BTreeMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for targets in succ.values() {
            for t in targets {
                *indegree.get_mut(t).unwrap() += 1;
            }
        }
        let mut ready: BTreeSet<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.to_string());
            for t in &succ[n] {
                let d = indegree.get_mut(t).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(t);
                }
            }
        }
        if order.len() != self.nodes.len() {
            let cycle = self.cycles().into_iter().next().unwrap_or_default();
            return Err(GraphError::GraphCycle(cycle));
        }
        Ok(order)
    }

    /// Unroll a list-valued parameter: `node` and its downstream closure are
    /// cloned once per value, each clone named `<name>-<key>-<value>`.
    pub fn expand_parameter_sweep(&mut self, node: &str, key: &str) -> Result<&mut Self, GraphError> {
        let values = match self.node(node)?.param(key) {
            Some(ParamValue::List(v)) if !v.is_empty() => v.clone(),
            _ => {
                return Err(GraphError::NotASweep {
                    node: node.to_string(),
                    key: key.to_string(),
                })
            }
        };
        let closure = self.downstream_closure(node);

        let mut renames = Vec::with_capacity(values.len());
        let mut fresh = BTreeSet::new();
        for v in &values {
            let suffix = sweep_suffix(key, v);
            let map: BTreeMap<String, String> = closure
                .iter()
                .map(|c| (c.clone(), format!("{c}{suffix}")))
                .collect();
            for new in map.values() {
                if (self.nodes.contains_key(new) && !closure.contains(new)) || !fresh.insert(new.clone()) {
                    return Err(GraphError::SweepCollision(new.clone()));
                }
            }
            renames.push((v.clone(), map));
        }

        let old_nodes: BTreeMap<String, NodeInstance> = closure
            .iter()
            .map(|c| (c.clone(), self.nodes.remove(c).unwrap()))
            .collect();
        let (touching, kept): (BTreeSet<Edge>, BTreeSet<Edge>) = std::mem::take(&mut self.edges)
            .into_iter()
            .partition(|e| closure.contains(&e.dst.node) || closure.contains(&e.src.node));
        self.edges = kept;

        for (value, map) in renames {
            for (old, inst) in &old_nodes {
                let mut inst = inst.clone();
                if old == node {
                    inst.overrides.insert(key.to_string(), ParamValue::Scalar(value.clone()));
                }
                self.nodes.insert(map[old].clone(), inst);
            }
            for e in &touching {
                let rename = |p: &PortRef| match map.get(&p.node) {
                    Some(n) => PortRef::new(n.clone(), p.port.clone()),
                    None => p.clone(),
                };
                self.edges.insert(Edge {
                    src: rename(&e.src),
                    dst: rename(&e.dst),
                });
            }
        }
        Ok(self)
    }

    /// Turn `node` into a pre-built vendor package served from the stash:
    /// all its incoming edges are removed.
    pub fn mark_prebuilt(&mut self, node: &str, stash_id: &str, stash: &dyn StashLookup) -> Result<&mut Self, GraphError> {
        self.node(node)?;
        let prebuilt = stash
            .lookup(stash_id)
            .ok_or_else(|| GraphError::UnknownStashId(stash_id.to_string()))?;
        self.edges.retain(|e| e.dst.node != node);
        self.node_mut(node)?.prebuilt = Some(prebuilt);
        Ok(self)
    }

    /// Graphviz rendering; vertices are labelled `<topo-index>-<name>`.
    pub fn export_dot(&self) -> Result<String, GraphError> {
        let order = self.topological_order()?;
        let mut out = String::from("digraph flow {\n");
        for (i, name) in order.iter().enumerate() {
            let style = if self.nodes[name].prebuilt.is_some() {
                ", style=filled, fillcolor=lightgray"
            } else {
                ""
            };
            out.push_str(&format!("  \"{name}\" [label=\"{i}-{name}\"{style}];\n"));
        }
        for e in &self.edges {
            let label = if e.src.port == e.dst.port {
                e.src.port.clone()
            } else {
                format!("{}:{}", e.src.port, e.dst.port)
            };
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
                e.src.node,
                e.dst.node,
                label.replace('\\', "\\\\").replace('"', "\\\"")
            ));
        }
        out.push_str("}\n");
        Ok(out)
    }
}

/// Make a value safe for instance and directory names: `.` becomes `p`,
/// anything else outside `[a-zA-Z0-9_-]` becomes `_`.
pub fn sanitize(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '.' => 'p',
            c if c.is_ascii_alphanumeric() || c == '_' || c == '-' => c,
            _ => '_',
        })
        .collect()
}

/// Name suffix given to the clone carrying `value`.
pub fn sweep_suffix(key: &str, value: &Scalar) -> String {
    format!("-{}-{}", sanitize(key), sanitize(&value.render()))
}

fn tarjan<'a>(succ: &BTreeMap<&'a str, BTreeSet<&'a str>>) -> Vec<BTreeSet<&'a str>> {
    struct State<'a> {
        index: BTreeMap<&'a str, usize>,
        low: BTreeMap<&'a str, usize>,
        stack: Vec<&'a str>,
        on_stack: BTreeSet<&'a str>,
        out: Vec<BTreeSet<&'a str>>,
    }
    fn visit<'a>(v: &'a str, succ: &BTreeMap<&'a str, BTreeSet<&'a str>>, s: &mut State<'a>) {
        let i = s.index.len();
        s.index.insert(v, i);
        s.low.insert(v, i);
        s.stack.push(v);
        s.on_stack.insert(v);
        for &w in &succ[v] {
            if !s.index.contains_key(w) {
                visit(w, succ, s);
                let lw = s.low[w];
                let lv = s.low.get_mut(v).unwrap();
                *lv = (*lv).min(lw);
            } else if s.on_stack.contains(w) {
                let iw = s.index[w];
                let lv = s.low.get_mut(v).unwrap();
                *lv = (*lv).min(iw);
            }
        }
        if s.low[v] == s.index[v] {
            let mut comp = BTreeSet::new();
            loop {
                let w = s.stack.pop().unwrap();
                s.on_stack.remove(w);
                comp.insert(w);
                if w == v {
                    break;
                }
            }
            s.out.push(comp);
        }
    }
    let mut s = State {
        index: BTreeMap::new(),
        low: BTreeMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        out: Vec::new(),
    };
    for &v in succ.keys() {
        if !s.index.contains_key(v) {
            visit(v, succ, &mut s);
        }
    }
    s.out
}
