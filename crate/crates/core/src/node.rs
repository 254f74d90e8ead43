// SPDX-License-Identifier: Apache-2.0

//! Node packages: parsing, validation, classification and fingerprinting.
//!
//! A node package is a directory holding a `configure.yml` and whatever
//! scripts its commands reference:
//!
//! ```yaml
//! name: synth
//! inputs: [adk, design.v]
//! outputs: [design.v]
//! commands:
//!   - sh run.sh
//! parameters:
//!   clock_period: 2.0
//! postconditions:
//!   - exists("outputs/design.v")
//! ```
//!
//! Only `name` is required.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::hash::FramedHasher;
use crate::tcl::{format_double, list_format};

/// File name of the node configuration inside a package.
pub const CONFIG_FILE: &str = "configure.yml";

const SCRIPT_EXTENSIONS: &[&str] = &["sh", "tcl", "py", "pl", "mk"];
const WORKSPACE_DIRS: &[&str] = &["inputs", "outputs", "logs"];

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("{path}: no {CONFIG_FILE} found")]
    MissingConfigFile { path: PathBuf },
    #[error("{path}: the `name` field is required")]
    MissingName { path: PathBuf },
    #[error("{path}:{line}: malformed configuration: {message}")]
    MalformedConfig {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("node `{node}`: port `{port}` is declared twice")]
    DuplicatePortName { node: String, port: String },
    #[error("node name `{name}` must match [a-zA-Z0-9_-]+")]
    InvalidName { name: String },
    #[error("node `{node}`: `{port}` is not a plain file name")]
    InvalidPortName { node: String, port: String },
    #[error("node `{node}`: script `{script}` does not resolve inside {}", dir.display())]
    ScriptOutsidePackage {
        node: String,
        script: String,
        dir: PathBuf,
    },
    #[error("node `{node}` has no inputs, outputs or commands")]
    EmptyNode { node: String },
    #[error("{path}: unreadable script: {message}")]
    UnreadableScript { path: PathBuf, message: String },
}

/// A parameter scalar. YAML literal types are preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Scalar {
    /// Text form used for environment variables and Tcl bindings.
    pub fn render(&self) -> String {
        match self {
            Scalar::Bool(b) => b.to_string(),
            Scalar::Int(i) => i.to_string(),
            Scalar::Float(f) => format_double(*f),
            Scalar::Str(s) => s.clone(),
        }
    }

    /// Parse a command-line value with YAML literal rules (`2` is an
    /// integer, `2.0` a decimal, `true` a boolean, anything else a string).
    pub fn parse_literal(text: &str) -> Scalar {
        serde_yaml::from_str::<Scalar>(text).unwrap_or_else(|_| Scalar::Str(text.to_string()))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// A parameter value: a scalar, or a list of scalars that acts as a sweep
/// source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(Scalar),
    List(Vec<Scalar>),
}

impl ParamValue {
    pub fn as_scalar(&self) -> Option<&Scalar> {
        match self {
            ParamValue::Scalar(s) => Some(s),
            ParamValue::List(_) => None,
        }
    }

    /// Tcl rendering; lists become well-formed Tcl lists.
    pub fn render(&self) -> String {
        match self {
            ParamValue::Scalar(s) => s.render(),
            ParamValue::List(items) => {
                list_format(items.iter().map(Scalar::render).collect::<Vec<_>>().iter())
            }
        }
    }

    /// Parse a command-line value: YAML flow lists become sweeps.
    pub fn parse_literal(text: &str) -> ParamValue {
        serde_yaml::from_str::<ParamValue>(text)
            .ok()
            .filter(|v| !matches!(v, ParamValue::Scalar(Scalar::Str(_))))
            .unwrap_or_else(|| ParamValue::Scalar(Scalar::Str(text.to_string())))
    }
}

impl From<Scalar> for ParamValue {
    fn from(s: Scalar) -> Self {
        ParamValue::Scalar(s)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Scalar(Scalar::Float(v))
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Scalar(Scalar::Int(v))
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Scalar(Scalar::Str(v.to_string()))
    }
}

/// Parsed contents of a node package.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub commands: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, ParamValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preconditions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub postconditions: Vec<String>,
    /// Tool commands that static Tcl evaluation treats as no-ops.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub opaque_commands: Vec<String>,
    #[serde(skip)]
    pub source_dir: PathBuf,
}

/// The three node shapes a package can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    /// Outputs only: a static file supplier that never executes.
    VendorPackage,
    /// Inputs and commands, no outputs: a report generator.
    Analysis,
    Transform,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::VendorPackage => "vendor-package",
            NodeKind::Analysis => "analysis",
            NodeKind::Transform => "transform",
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    outputs: Vec<String>,
    #[serde(default)]
    commands: Vec<String>,
    #[serde(default)]
    parameters: BTreeMap<String, ParamValue>,
    #[serde(default)]
    preconditions: Vec<String>,
    #[serde(default)]
    postconditions: Vec<String>,
    #[serde(default)]
    opaque_commands: Vec<String>,
}

/// Read and validate the package at `dir`.
pub fn parse_node_config(dir: &Path) -> Result<NodeConfig, NodeError> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|_| NodeError::MissingConfigFile {
        path: dir.to_path_buf(),
    })?;
    let mut cfg = parse_config_text(&text, &path)?;
    cfg.source_dir = dir.to_path_buf();
    cfg.validate()?;
    Ok(cfg)
}

/// Parse configuration text without touching the filesystem. `path` is used
/// for error messages only; `source_dir` is left empty.
pub fn parse_config_text(text: &str, path: &Path) -> Result<NodeConfig, NodeError> {
    let raw: RawConfig = if text.trim().is_empty() {
        return Err(NodeError::MissingName {
            path: path.to_path_buf(),
        });
    } else {
        serde_yaml::from_str(text).map_err(|e| NodeError::MalformedConfig {
            path: path.to_path_buf(),
            line: e.location().map(|l| l.line()).unwrap_or(0),
            message: e.to_string(),
        })?
    };
    let name = raw.name.ok_or_else(|| NodeError::MissingName {
        path: path.to_path_buf(),
    })?;
    Ok(NodeConfig {
        name,
        inputs: raw.inputs,
        outputs: raw.outputs,
        commands: raw.commands,
        parameters: raw.parameters,
        preconditions: raw.preconditions,
        postconditions: raw.postconditions,
        opaque_commands: raw.opaque_commands,
        source_dir: PathBuf::new(),
    })
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl NodeConfig {
    /// A bare configuration with only a name; handy for building graphs in
    /// code.
    pub fn new(name: impl Into<String>) -> Self {
        NodeConfig {
            name: name.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            commands: Vec::new(),
            parameters: BTreeMap::new(),
            preconditions: Vec::new(),
            postconditions: Vec::new(),
            opaque_commands: Vec::new(),
            source_dir: PathBuf::new(),
        }
    }

    pub fn with_inputs<I, S>(mut self, ports: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.inputs = ports.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_outputs<I, S>(mut self, ports: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.outputs = ports.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_commands<I, S>(mut self, commands: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.commands = commands.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if !is_valid_name(&self.name) {
            return Err(NodeError::InvalidName {
                name: self.name.clone(),
            });
        }
        for ports in [&self.inputs, &self.outputs] {
            let mut seen = BTreeSet::new();
            for port in ports {
                if port.is_empty() || port == "." || port == ".." || port.contains(['/', '\\']) {
                    return Err(NodeError::InvalidPortName {
                        node: self.name.clone(),
                        port: port.clone(),
                    });
                }
                if !seen.insert(port) {
                    return Err(NodeError::DuplicatePortName {
                        node: self.name.clone(),
                        port: port.clone(),
                    });
                }
            }
        }
        self.check_script_paths()
    }

    /// Every relative path mentioned by a command must stay inside the
    /// package, and anything that looks like a script must exist there.
    fn check_script_paths(&self) -> Result<(), NodeError> {
        for command in &self.commands {
            for token in command.split_whitespace() {
                let token = token.trim_matches(|c| c == '\'' || c == '"' || c == ';');
                if token.is_empty()
                    || token.starts_with('-')
                    || token.contains(['$', '`', '=', '>', '<', '|', '&', '*'])
                {
                    continue;
                }
                let path = Path::new(token);
                if path.is_absolute() {
                    continue;
                }
                let first = path.components().next();
                if let Some(Component::Normal(first)) = first {
                    if WORKSPACE_DIRS.iter().any(|d| first == *d) {
                        continue;
                    }
                }
                let escapes = lexical_escape(path);
                let scriptish = path
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| SCRIPT_EXTENSIONS.contains(&e));
                if escapes || (scriptish && !self.source_dir.join(path).is_file()) {
                    return Err(NodeError::ScriptOutsidePackage {
                        node: self.name.clone(),
                        script: token.to_string(),
                        dir: self.source_dir.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("node config serializes")
    }

    pub fn kind(&self) -> Result<NodeKind, NodeError> {
        node_kind(self)
    }
}

fn lexical_escape(path: &Path) -> bool {
    let mut depth = 0i32;
    for c in path.components() {
        match c {
            Component::ParentDir => {
                depth -= 1;
                if depth < 0 {
                    return true;
                }
            }
            Component::Normal(_) => depth += 1,
            _ => {}
        }
    }
    false
}

/// Classify a configuration by which field groups are populated.
///
/// Combinations other than the three canonical shapes are treated as
/// transforms; a node with nothing at all is rejected.
pub fn node_kind(cfg: &NodeConfig) -> Result<NodeKind, NodeError> {
    let ins = !cfg.inputs.is_empty();
    let outs = !cfg.outputs.is_empty();
    let cmds = !cfg.commands.is_empty();
    match (ins, outs, cmds) {
        (false, false, false) => Err(NodeError::EmptyNode {
            node: cfg.name.clone(),
        }),
        (false, true, false) => Ok(NodeKind::VendorPackage),
        (true, false, true) => Ok(NodeKind::Analysis),
        _ => Ok(NodeKind::Transform),
    }
}

/// Fingerprint of a node instance: canonical configuration text, every
/// package file except `configure.yml` (sorted by relative path), and the
/// upstream hashes in input-port order.
pub fn node_content_hash(cfg: &NodeConfig, input_hashes: &[String]) -> Result<String, NodeError> {
    let mut hasher = FramedHasher::new();
    hasher.field(b"node-v1");
    hasher.field(cfg.to_yaml());

    let mut files = Vec::new();
    if !cfg.source_dir.as_os_str().is_empty() {
        for entry in WalkDir::new(&cfg.source_dir).follow_links(true) {
            let entry = entry.map_err(|e| NodeError::UnreadableScript {
                path: e.path().unwrap_or(&cfg.source_dir).to_path_buf(),
                message: e.to_string(),
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(&cfg.source_dir)
                .unwrap_or(entry.path())
                .to_path_buf();
            if rel == Path::new(CONFIG_FILE) {
                continue;
            }
            files.push(rel);
        }
    }
    files.sort();
    hasher.field((files.len() as u64).to_le_bytes());
    for rel in files {
        let full = cfg.source_dir.join(&rel);
        let bytes = fs::read(&full).map_err(|e| NodeError::UnreadableScript {
            path: full.clone(),
            message: e.to_string(),
        })?;
        hasher.field(rel.to_string_lossy().as_bytes());
        hasher.field(bytes);
    }

    hasher.field((input_hashes.len() as u64).to_le_bytes());
    for h in input_hashes {
        hasher.field(h);
    }
    Ok(hasher.finish())
}
