// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use crate::assertions::{instrument_graph, CheckExpr};
use crate::check::CheckReport;
use crate::graph::{FlowGraph, GraphError, Prebuilt};
use crate::node::{NodeConfig, NodeKind};

use super::BuildError;

/// Where one input port of a step reads from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputBinding {
    pub port: String,
    pub from_step: String,
    pub from_port: String,
}

#[derive(Debug, Clone)]
pub struct PlanStep {
    /// Position in topological order, starting at 0.
    pub index: usize,
    pub name: String,
    /// Directory under the build root, `<index>-<name>`.
    pub dir: String,
    pub kind: NodeKind,
    /// Effective parameters rendered as strings.
    pub params: BTreeMap<String, String>,
    pub commands: Vec<String>,
    pub pre: Vec<CheckExpr>,
    pub post: Vec<CheckExpr>,
    /// In input-port order.
    pub inputs: Vec<InputBinding>,
    pub outputs: Vec<String>,
    pub config: NodeConfig,
    pub prebuilt: Option<Prebuilt>,
}

impl PlanStep {
    /// Environment variable carrying parameter `key`.
    pub fn param_env(key: &str) -> String {
        let mut s = String::from("PARAM_");
        s.extend(key.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' }));
        s
    }

    /// Distinct upstream step names, in input-port order.
    pub fn upstream(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.inputs
            .iter()
            .filter(|b| seen.insert(b.from_step.as_str()))
            .map(|b| b.from_step.as_str())
            .collect()
    }
}

/// Steps in topological order.
#[derive(Debug, Clone, Default)]
pub struct BuildPlan {
    pub steps: Vec<PlanStep>,
    index: BTreeMap<String, usize>,
}

impl BuildPlan {
    pub fn step(&self, name: &str) -> Option<&PlanStep> {
        self.index.get(name).map(|&i| &self.steps[i])
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `name` and everything it transitively reads from.
    pub fn ancestors_inclusive(&self, name: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![name.to_string()];
        while let Some(n) = stack.pop() {
            if !out.insert(n.clone()) {
                continue;
            }
            if let Some(s) = self.step(&n) {
                stack.extend(s.upstream().into_iter().map(String::from));
            }
        }
        out
    }
}

/// Lower a graph to a build plan.
///
/// `checks` is the static-check report for the graph; any failure in it
/// refuses the plan unless `force` is set.
pub fn emit_build_plan(g: &FlowGraph, checks: Option<&CheckReport>, force: bool) -> Result<BuildPlan, BuildError> {
    if let Some(report) = checks {
        let failures = report.failures().count();
        if failures > 0 && !force {
            return Err(BuildError::StaticCheckFailed(failures));
        }
    }
    let order = g.topological_order().map_err(|e| match e {
        GraphError::GraphCycle(c) => BuildError::GraphCycle(c),
        other => BuildError::Graph(other),
    })?;
    let validation = g.validate_graph();
    if !validation.dangling_inputs.is_empty() {
        return Err(BuildError::DanglingInputs(validation.dangling_inputs));
    }
    let mut conditions = instrument_graph(g)?;

    let mut plan = BuildPlan::default();
    for (index, name) in order.into_iter().enumerate() {
        let inst = g.node(&name)?;
        let config = inst.effective_config();
        let kind = config.kind()?;
        let incoming = g.incoming(&name);
        let inputs = config
            .inputs
            .iter()
            .filter_map(|port| {
                incoming.iter().find(|e| &e.dst.port == port).map(|e| InputBinding {
                    port: port.clone(),
                    from_step: e.src.node.clone(),
                    from_port: e.src.port.clone(),
                })
            })
            .collect();
        let checks = conditions.remove(&name).unwrap_or_default();
        let prebuilt = inst.prebuilt.clone();
        let (commands, pre, post) = if prebuilt.is_some() {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            (config.commands.clone(), checks.pre, checks.post)
        };
        plan.index.insert(name.clone(), index);
        plan.steps.push(PlanStep {
            index,
            dir: format!("{index}-{name}"),
            name,
            kind,
            params: config.parameters.iter().map(|(k, v)| (k.clone(), v.render())).collect(),
            commands,
            pre,
            post,
            inputs,
            outputs: config.outputs.clone(),
            config,
            prebuilt,
        });
    }
    Ok(plan)
}
