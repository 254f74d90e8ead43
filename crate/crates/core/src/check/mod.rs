// SPDX-License-Identifier: Apache-2.0

//! Static consistency checks, run at graph elaboration time.
//!
//! [`check_graph`] collects every `*.tcl` file of every node, extracts
//! annotations and intent blocks, builds a static Tcl context per node
//! (technology bindings, then parameters, then each intent implementation
//! in file order) and evaluates:
//!
//! * intent properties, after their implementation runs;
//! * enum annotations against the technology interface;
//! * standalone asserts in the node's final context;
//! * equality groups across all nodes.
//!
//! No node command is executed and nothing is written to disk.

mod annotation;
mod intent;
mod tech;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

pub use annotation::{
    extract_annotations, scan_annotations, Annotation, AnnotationKind, AnnotationScan, Location,
    MalformedAnnotation,
};
pub use intent::{extract_intent_blocks, IntentBlock, IntentError, Property};
pub use tech::{lef_macro_names, load_technology_interface, parse_tech_text, TechError, TechnologyInterface};

use crate::graph::{FlowGraph, NodeInstance};
use crate::node::ParamValue;
use crate::tcl::{parse_number, Number, TclContext, TclValue};

const REL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Undecidable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Undecidable => "UNDECIDABLE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    /// What was checked, e.g. `enum stdcell INV_X1` or `property {$a > 0}`.
    pub subject: String,
    pub verdict: Verdict,
    pub message: String,
    pub location: Location,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failures: usize,
    pub undecidable: usize,
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    verdict: Verdict,
    subject: &'a str,
    message: &'a str,
    node: &'a str,
    file: String,
    line: usize,
}

impl CheckReport {
    pub fn push(&mut self, subject: impl Into<String>, verdict: Verdict, message: impl Into<String>, location: Location) {
        self.results.push(CheckResult {
            subject: subject.into(),
            verdict,
            message: message.into(),
            location,
        });
    }

    pub fn extend(&mut self, other: CheckReport) {
        self.results.extend(other.results);
    }

    /// Order by node, file, line, then subject.
    pub fn sort(&mut self) {
        self.results.sort_by(|a, b| {
            (&a.location, &a.subject, a.verdict).cmp(&(&b.location, &b.subject, b.verdict))
        });
    }

    pub fn summary(&self) -> Summary {
        let count = |v: Verdict| self.results.iter().filter(|r| r.verdict == v).count();
        Summary {
            total: self.results.len(),
            passed: count(Verdict::Pass),
            failures: count(Verdict::Fail),
            undecidable: count(Verdict::Undecidable),
        }
    }

    /// Whether the report should block a build. Undecidable results only
    /// count when `strict` is set.
    pub fn is_failure(&self, strict: bool) -> bool {
        let s = self.summary();
        s.failures > 0 || (strict && s.undecidable > 0)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| r.verdict == Verdict::Fail)
    }

    /// Human-readable rendering; passing checks are listed only when
    /// `verbose`.
    pub fn render_text(&self, verbose: bool) -> String {
        let mut out = String::new();
        for r in &self.results {
            if r.verdict == Verdict::Pass && !verbose {
                continue;
            }
            out.push_str(&format!("{} {}: {}: {}\n", r.verdict, r.location, r.subject, r.message));
        }
        let s = self.summary();
        out.push_str(&format!(
            "{} checks: {} passed, {} failures, {} undecidable\n",
            s.total, s.passed, s.failures, s.undecidable
        ));
        out
    }

    /// One JSON object per line, one line per result.
    pub fn render_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let rec = JsonRecord {
                verdict: r.verdict,
                subject: &r.subject,
                message: &r.message,
                node: &r.location.node,
                file: r.location.file.display().to_string(),
                line: r.location.line,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

fn tcl_error_message(e: &crate::tcl::TclError) -> String {
    e.kind.to_string()
}

fn property_subject(expr: &str) -> String {
    format!("property {expr}")
}

/// Evaluate one intent block: the implementation first, then each
/// property as a boolean. Returns the report and, when the implementation
/// ran cleanly, the context it produced.
pub fn run_block(block: &IntentBlock, ctx: &TclContext, node: &str, file: &Path) -> (CheckReport, Option<TclContext>) {
    let mut report = CheckReport::default();
    let loc = |line| Location {
        node: node.to_string(),
        file: file.to_path_buf(),
        line,
    };
    let mut ctx = ctx.clone();
    for (k, v) in &block.bindings {
        ctx.set_var(k.clone(), v.clone());
    }
    let after = ctx.eval_at(&block.implementation, block.impl_line).map(|_| ctx);
    let after = match after {
        Ok(c) => c,
        Err(e) => {
            let why = format!("implementation: {}", tcl_error_message(&e));
            for p in &block.properties {
                report.push(property_subject(&p.expr), Verdict::Undecidable, why.clone(), loc(p.line));
            }
            return (report, None);
        }
    };
    for p in &block.properties {
        let a = Annotation {
            kind: AnnotationKind::Assert,
            name: String::new(),
            argument: p.expr.clone(),
            location: loc(p.line),
        };
        let (verdict, message) = assert_verdict(&a, &after);
        report.push(property_subject(&p.expr), verdict, message, loc(p.line));
    }
    (report, Some(after))
}

/// Run an intent block's implementation in `ctx` and check its properties.
pub fn run_property_checks(block: &IntentBlock, ctx: &TclContext, node: &str, file: &Path) -> CheckReport {
    run_block(block, ctx, node, file).0
}

fn assert_verdict(a: &Annotation, ctx: &TclContext) -> (Verdict, String) {
    match a.assert_value(ctx) {
        Ok(v) => match v.as_bool() {
            Some(true) => (Verdict::Pass, "holds".into()),
            Some(false) => (Verdict::Fail, "does not hold".into()),
            None => (Verdict::Undecidable, format!("not a boolean: \"{v}\"")),
        },
        Err(e) => (Verdict::Undecidable, tcl_error_message(&e)),
    }
}

/// Check enum annotations against the technology interface.
pub fn run_enum_checks(annotations: &[Annotation], tech: Option<&TechnologyInterface>) -> CheckReport {
    let mut report = CheckReport::default();
    for a in annotations.iter().filter(|a| a.kind == AnnotationKind::Enum) {
        let subject = format!("enum {} {}", a.name, a.argument);
        let loc = a.location.clone();
        let Some(tech) = tech else {
            report.push(subject, Verdict::Undecidable, "no technology interface", loc);
            continue;
        };
        let Some(value) = a.literal_argument() else {
            report.push(subject, Verdict::Undecidable, "argument is not a literal word", loc);
            continue;
        };
        let (known, what) = match a.name.as_str() {
            "stdcell" => (tech.stdcells.contains(&value), "standard cell"),
            "metal_layer" => (tech.metal_layers.contains(&value), "metal layer"),
            _ => {
                report.push(subject, Verdict::Undecidable, "unknown enum category", loc);
                continue;
            }
        };
        if known {
            report.push(subject, Verdict::Pass, format!("valid {what}"), loc);
        } else {
            report.push(subject, Verdict::Fail, format!("`{value}` is not a {what} of the technology"), loc);
        }
    }
    report
}

/// Whether two resolved values agree: integers exactly, decimals within a
/// relative tolerance, anything non-numeric by exact text.
fn values_equal(a: &str, b: &str) -> bool {
    match (parse_number(a), parse_number(b)) {
        (Some(Number::Int(x)), Some(Number::Int(y))) => x == y,
        (Some(x), Some(y)) => {
            let (x, y) = (x.as_f64(), y.as_f64());
            x == y || (x - y).abs() <= REL_TOLERANCE * x.abs().max(y.abs())
        }
        _ => a == b,
    }
}

/// Group equality annotations by name and compare the values they resolve
/// to, each in its own node's context.
pub fn run_equality_checks(members: &[(Annotation, &TclContext)]) -> CheckReport {
    let mut groups: BTreeMap<&str, Vec<&(Annotation, &TclContext)>> = BTreeMap::new();
    for m in members.iter().filter(|m| m.0.kind == AnnotationKind::Equality) {
        groups.entry(m.0.name.as_str()).or_default().push(m);
    }
    let mut report = CheckReport::default();
    for (name, mut group) in groups {
        group.sort_by(|a, b| (&a.0.location, &a.0.argument).cmp(&(&b.0.location, &b.0.argument)));
        let resolved: Vec<(&Annotation, Result<TclValue, String>)> = group
            .iter()
            .map(|(a, ctx)| (a, a.equality_value(ctx).map_err(|e| tcl_error_message(&e))))
            .collect();
        let listing = resolved
            .iter()
            .map(|(a, v)| match v {
                Ok(v) => format!("{} = {v}", a.location),
                Err(e) => format!("{} = <{e}>", a.location),
            })
            .collect::<Vec<_>>()
            .join("; ");
        let subject = format!("equality {name}");
        let first = resolved[0].0.location.clone();
        if resolved.iter().any(|(_, v)| v.is_err()) {
            report.push(subject, Verdict::Undecidable, listing, first);
            continue;
        }
        let values: Vec<&str> = resolved.iter().map(|(_, v)| v.as_ref().unwrap().as_str()).collect();
        let all_equal = values.iter().all(|a| values.iter().all(|b| values_equal(a, b)));
        let verdict = if all_equal { Verdict::Pass } else { Verdict::Fail };
        report.push(subject, verdict, listing, first);
    }
    report
}

/// Static context every Tcl file of `inst` starts from.
pub fn base_context(inst: &NodeInstance, tech: Option<&TechnologyInterface>) -> TclContext {
    let mut ctx = TclContext::new();
    if let Some(tech) = tech {
        for (k, v) in tech.bindings() {
            ctx.set_var(k, v);
        }
    }
    for (k, v) in inst.effective_params() {
        let text = match &v {
            ParamValue::Scalar(s) => s.render(),
            ParamValue::List(_) => v.render(),
        };
        ctx.set_var(k, text);
    }
    ctx.allow_opaque(inst.config.opaque_commands.iter().cloned());
    ctx
}

/// Sorted `*.tcl` files under a package directory.
pub fn tcl_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a readable directory", dir.display()),
        ));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).follow_links(true).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "tcl") {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// Per-node outcome: local results plus what equality checks need.
struct NodeOutcome {
    report: CheckReport,
    equalities: Vec<Annotation>,
    context: TclContext,
}

fn check_node(name: &str, inst: &NodeInstance, tech: Option<&TechnologyInterface>) -> NodeOutcome {
    let mut report = CheckReport::default();
    let mut ctx = base_context(inst, tech);
    let dir = &inst.config.source_dir;
    let loc = |file: &Path, line: usize| Location {
        node: name.to_string(),
        file: file.to_path_buf(),
        line,
    };
    let files = match tcl_files(dir) {
        Ok(f) => f,
        Err(e) => {
            report.push("read package", Verdict::Undecidable, e.to_string(), loc(dir, 0));
            return NodeOutcome {
                report,
                equalities: Vec::new(),
                context: ctx,
            };
        }
    };

    let mut enums = Vec::new();
    let mut equalities = Vec::new();
    let mut asserts = Vec::new();
    for file in files {
        let src = match fs::read_to_string(&file) {
            Ok(s) => s,
            Err(e) => {
                report.push("read file", Verdict::Undecidable, e.to_string(), loc(&file, 0));
                continue;
            }
        };
        let blocks = match extract_intent_blocks(&src) {
            Ok(b) => b,
            Err(e) => {
                report.push("intent markers", Verdict::Fail, e.to_string(), loc(&file, e.line()));
                Vec::new()
            }
        };
        let scan = scan_annotations(&src, 1, name, &file);
        for m in scan.malformed {
            let in_block = blocks.iter().any(|b| b.contains_line(m.location.line));
            if !in_block {
                report.push(
                    format!("annotation {}", m.command),
                    Verdict::Fail,
                    format!("MalformedAnnotation: {}", m.message),
                    m.location,
                );
            }
        }
        for a in scan.annotations {
            match a.kind {
                AnnotationKind::Enum => enums.push(a),
                AnnotationKind::Equality => equalities.push(a),
                AnnotationKind::Assert => {
                    if !blocks.iter().any(|b| b.intent_span.0 <= a.location.line && a.location.line <= b.intent_span.1) {
                        asserts.push(a);
                    }
                }
            }
        }
        ctx.set_source(Some(file.clone()));
        for block in &blocks {
            let (r, after) = run_block(block, &ctx, name, &file);
            report.extend(r);
            if let Some(after) = after {
                ctx = after;
            }
        }
    }
    ctx.set_source(None);

    report.extend(run_enum_checks(&enums, tech));
    for a in &asserts {
        let (verdict, message) = assert_verdict(a, &ctx);
        report.push(format!("assert {}", a.argument), verdict, message, a.location.clone());
    }
    NodeOutcome {
        report,
        equalities,
        context: ctx,
    }
}

/// Run every static check over the graph. Nodes are checked in parallel;
/// the merged report is sorted so it does not depend on completion order.
pub fn check_graph(g: &FlowGraph, tech: Option<&TechnologyInterface>) -> CheckReport {
    let outcomes: Vec<(String, NodeOutcome)> = g
        .nodes()
        .par_iter()
        .map(|(name, inst)| (name.clone(), check_node(name, inst, tech)))
        .collect();
    let mut report = CheckReport::default();
    let mut members = Vec::new();
    for (_, outcome) in &outcomes {
        report.extend(outcome.report.clone());
        for a in &outcome.equalities {
            members.push((a.clone(), &outcome.context));
        }
    }
    report.extend(run_equality_checks(&members));
    report.sort();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::{NodeConfig, Scalar};

    fn tech() -> TechnologyInterface {
        parse_tech_text(
            "stdcells: [INV_X1, NAND2_X1, DFF_X1]\nmetal_layers: [M1, M2, M3]\ntrack_pitch_x: 0.19\n\
             track_pitch_y: 0.14\ntime_unit: ns\nconstants:\n  switch_pitch: 3\n",
            Path::new("tech.yml"),
            Path::new("."),
        )
        .unwrap()
    }

    fn block(imp: &str, props: &[&str]) -> IntentBlock {
        let mut src = String::from("# mflowgen-intent begin\n");
        for p in props {
            src.push_str(&format!("mflowgen.assert {{{p}}}\n"));
        }
        src.push_str("# mflowgen-intent end\n# mflowgen-impl begin\n");
        src.push_str(imp);
        src.push_str("\n# mflowgen-impl end\n");
        extract_intent_blocks(&src).unwrap().remove(0)
    }

    #[test]
    fn property_verdicts() {
        let ctx = TclContext::new();
        let file = Path::new("f.tcl");
        let pass = run_property_checks(&block("set aon_x 12; set switch_pitch 3", &["$aon_x % $switch_pitch == 0"]), &ctx, "n", file);
        assert_eq!(pass.results[0].verdict, Verdict::Pass);
        let fail = run_property_checks(&block("set aon_x 13; set switch_pitch 3", &["$aon_x % $switch_pitch == 0"]), &ctx, "n", file);
        assert_eq!(fail.results[0].verdict, Verdict::Fail);
        assert_eq!(fail.results[0].location.line, 2);
        let und = run_property_checks(&block("set w $floorplan_width", &["$w > 0"]), &ctx, "n", file);
        assert_eq!(und.results[0].verdict, Verdict::Undecidable);
        assert!(und.results[0].message.contains("UndefinedVariable floorplan_width"));
        let mut bound = block("set w [expr {$floorplan_width / 2}]", &["$w == 50"]);
        bound.bindings.insert("floorplan_width".into(), TclValue::new("100"));
        assert_eq!(run_property_checks(&bound, &ctx, "n", file).results[0].verdict, Verdict::Pass);
    }

    #[test]
    fn enum_verdicts() {
        let src = "mflowgen.enum.stdcell INV_X1\nmflowgen.enum.stdcell SUPER_INV\nmflowgen.enum.flavor vanilla\n\
                   mflowgen.enum.metal_layer M2\nmflowgen.enum.stdcell $c\n";
        let anns = extract_annotations(src, "n", "a.tcl").unwrap();
        let t = tech();
        let r = run_enum_checks(&anns, Some(&t));
        let verdicts: Vec<Verdict> = r.results.iter().map(|r| r.verdict).collect();
        assert_eq!(
            verdicts,
            [Verdict::Pass, Verdict::Fail, Verdict::Undecidable, Verdict::Pass, Verdict::Undecidable]
        );
        assert_eq!(r.results[1].location.line, 2);
        assert_eq!(r.results[2].message, "unknown enum category");
        assert!(run_enum_checks(&anns, None).results.iter().all(|r| r.verdict == Verdict::Undecidable));
    }

    fn eq_member(node: &str, arg: &str, vars: &[(&str, &str)]) -> (Annotation, TclContext) {
        let a = extract_annotations(&format!("mflowgen.equality.tile_height {arg}\n"), node, "t.tcl")
            .unwrap()
            .remove(0);
        let mut ctx = TclContext::new();
        for (k, v) in vars {
            ctx.set_var(*k, *v);
        }
        (a, ctx)
    }

    fn equality(members: &[(Annotation, TclContext)]) -> CheckReport {
        let refs: Vec<(Annotation, &TclContext)> = members.iter().map(|(a, c)| (a.clone(), c)).collect();
        run_equality_checks(&refs)
    }

    #[test]
    fn equality_verdicts() {
        let same = [eq_member("a", "$h", &[("h", "92.4")]), eq_member("b", "{46.2 * 2}", &[])];
        let r = equality(&same);
        assert_eq!(r.results.len(), 1);
        assert_eq!(r.results[0].verdict, Verdict::Pass);

        let differ = [eq_member("a", "$h", &[("h", "92.4")]), eq_member("b", "88.0", &[])];
        let r = equality(&differ);
        assert_eq!(r.results[0].verdict, Verdict::Fail);
        assert!(r.results[0].message.contains("92.4") && r.results[0].message.contains("88.0"));
        assert!(r.results[0].message.contains("[a]") && r.results[0].message.contains("[b]"));

        let single = [eq_member("a", "x", &[])];
        assert_eq!(equality(&single).results[0].verdict, Verdict::Pass);

        let unknown = [eq_member("a", "$h", &[]), eq_member("b", "1", &[])];
        assert_eq!(equality(&unknown).results[0].verdict, Verdict::Undecidable);

        let ints = [eq_member("a", "12", &[]), eq_member("b", "012", &[])];
        assert_eq!(equality(&ints).results[0].verdict, Verdict::Fail);
        let strings = [eq_member("a", "abc", &[]), eq_member("b", "abc", &[])];
        assert_eq!(equality(&strings).results[0].verdict, Verdict::Pass);
    }

    #[test]
    fn equality_tolerance() {
        assert!(values_equal("92.4", "92.40000000001"));
        assert!(!values_equal("92.4", "92.41"));
        assert!(values_equal("3", "3.0"));
        assert!(!values_equal("3", "4"));
        assert!(values_equal("0.0", "-0.0"));
        assert!(!values_equal("abc", "abd"));
    }

    #[test]
    fn equality_is_order_independent() {
        let mut members = vec![
            eq_member("c", "$h", &[("h", "92.4")]),
            eq_member("a", "92.4", &[]),
            eq_member("b", "$h", &[("h", "90")]),
        ];
        let first = equality(&members);
        members.reverse();
        assert_eq!(equality(&members), first);
        members.swap(0, 1);
        assert_eq!(equality(&members), first);
        assert_eq!(first.results[0].location.node, "a");
    }

    fn write_node(root: &Path, name: &str, files: &[(&str, &str)], params: &[(&str, ParamValue)]) -> NodeConfig {
        let dir = root.join(name);
        fs::create_dir_all(&dir).unwrap();
        for (f, body) in files {
            fs::write(dir.join(f), body).unwrap();
        }
        let mut cfg = NodeConfig::new(name).with_outputs(["x"]);
        for (k, v) in params {
            cfg.parameters.insert(k.to_string(), v.clone());
        }
        cfg.opaque_commands.push("create_power_domain".into());
        cfg.source_dir = dir;
        cfg
    }

    #[test]
    fn whole_graph() {
        let tmp = tempfile::tempdir().unwrap();
        let a = write_node(
            tmp.path(),
            "a",
            &[(
                "floorplan.tcl",
                "# mflowgen-intent begin\nmflowgen.assert {$aon_x % $switch_pitch == 0}\n# mflowgen-intent end\n\
                 # mflowgen-impl begin\nset aon_x [expr {4 * $switch_pitch}]\ncreate_power_domain AON\n# mflowgen-impl end\n\
                 mflowgen.enum.stdcell INV_X1\nmflowgen.equality.tile_height $tile\nmflowgen.assert {$aon_x == 12}\n",
            )],
            &[("tile", ParamValue::Scalar(Scalar::Float(92.4)))],
        );
        let b = write_node(
            tmp.path(),
            "b",
            &[("place.tcl", "mflowgen.enum.metal_layer M3\nmflowgen.equality.tile_height {92.4}\n")],
            &[],
        );
        let mut g = FlowGraph::new();
        g.add_node(a, None).unwrap();
        g.add_node(b, None).unwrap();
        let t = tech();
        let before: Vec<_> = WalkDir::new(tmp.path()).into_iter().map(|e| e.unwrap().into_path()).collect();
        let report = check_graph(&g, Some(&t));
        let after: Vec<_> = WalkDir::new(tmp.path()).into_iter().map(|e| e.unwrap().into_path()).collect();
        assert_eq!(before, after);
        let s = report.summary();
        assert_eq!((s.total, s.passed), (5, 5), "{}", report.render_text(true));
        assert!(report.render_text(false).ends_with("5 checks: 5 passed, 0 failures, 0 undecidable\n"));
        assert_eq!(report.render_json_lines().lines().count(), 5);

        g.set_param("a", "tile", 88.0).unwrap();
        let report = check_graph(&g, Some(&t));
        assert_eq!(report.summary().failures, 1);
        assert_eq!(report.failures().next().unwrap().subject, "equality tile_height");
    }

    #[test]
    fn unreadable_node_is_isolated() {
        let tmp = tempfile::tempdir().unwrap();
        let good = write_node(tmp.path(), "good", &[("x.tcl", "mflowgen.enum.stdcell NOPE\n")], &[]);
        let mut ghost = NodeConfig::new("ghost").with_outputs(["x"]);
        ghost.source_dir = tmp.path().join("missing");
        let mut g = FlowGraph::new();
        g.add_node(good, None).unwrap();
        g.add_node(ghost, None).unwrap();
        let t = tech();
        let report = check_graph(&g, Some(&t));
        let s = report.summary();
        assert_eq!((s.failures, s.undecidable), (1, 1));
        assert!(report.is_failure(false));
    }

    #[test]
    fn marker_and_arity_errors_fail() {
        let tmp = tempfile::tempdir().unwrap();
        let n = write_node(
            tmp.path(),
            "n",
            &[("x.tcl", "mflowgen.enum.stdcell\n# mflowgen-intent begin\nmflowgen.assert {1}\n")],
            &[],
        );
        let mut g = FlowGraph::new();
        g.add_node(n, None).unwrap();
        let report = check_graph(&g, None);
        assert_eq!(report.summary().failures, 2, "{}", report.render_text(true));
        assert_eq!(report.results[0].location.line, 1);
    }
}
