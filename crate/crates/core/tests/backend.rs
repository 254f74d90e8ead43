// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::Command;

use pdflow::backend::{
    emit_build_plan, export_makefile, run_flow, BuildState, Outcome, RunOptions, StepError, StepRecord, StepStatus,
};
use pdflow::node::{parse_node_config, NodeConfig};
use pdflow::FlowGraph;

fn pkg(root: &Path, name: &str, yaml: &str) -> NodeConfig {
    let dir = root.join("nodes").join(name);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("configure.yml"), format!("name: {name}\n{yaml}")).unwrap();
    parse_node_config(&dir).unwrap()
}

fn graph(root: &Path, nodes: &[(&str, &str)], links: &[(&str, &str)]) -> FlowGraph {
    let mut g = FlowGraph::new();
    for (name, yaml) in nodes {
        g.add_node(pkg(root, name, yaml), None).unwrap();
    }
    for (a, b) in links {
        assert!(g.connect_by_name(a, b).unwrap() > 0);
    }
    g
}

const SRC: &str = "outputs: [a.txt]\ncommands: [\"echo a > outputs/a.txt\"]\n";
const MID: &str = "inputs: [a.txt]\noutputs: [b.txt]\ncommands: [\"cat inputs/a.txt > outputs/b.txt; echo b >> outputs/b.txt\"]\n";
const SINK: &str = "inputs: [b.txt]\noutputs: [c.txt]\ncommands: [\"wc -l < inputs/b.txt > outputs/c.txt\"]\n";

fn chain(root: &Path) -> FlowGraph {
    graph(root, &[("src", SRC), ("mid", MID), ("sink", SINK)], &[("src", "mid"), ("mid", "sink")])
}

#[test]
fn fresh_build_then_noop() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = emit_build_plan(&chain(tmp.path()), None, false).unwrap();
    let build = tmp.path().join("build");
    let r = run_flow(&plan, &build, &RunOptions::default()).unwrap();
    assert!(r.is_success());
    assert_eq!(r.executed, 3);
    assert_eq!(fs::read_to_string(build.join("2-sink/outputs/c.txt")).unwrap().trim(), "2");
    assert!(build.join("1-mid/logs/run.log").is_file());

    let r = run_flow(&plan, &build, &RunOptions::default()).unwrap();
    assert_eq!(r.executed, 0);
    assert!(r.steps.iter().all(|s| s.outcome == Outcome::UpToDate));
}

#[test]
fn command_failure_blocks_dependents_and_recovers() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = "inputs: [a.txt]\noutputs: [b.txt]\ncommands: [\"exit 3\"]\n";
    let g = graph(tmp.path(), &[("src", SRC), ("mid", bad), ("sink", SINK)], &[("src", "mid"), ("mid", "sink")]);
    let build = tmp.path().join("build");
    let r = run_flow(&emit_build_plan(&g, None, false).unwrap(), &build, &RunOptions::default()).unwrap();
    assert!(!r.is_success());
    assert!(matches!(&r.errors[..], [StepError::CommandFailed { code: Some(3), .. }]));
    assert_eq!(r.outcome("sink"), Some(&Outcome::Skipped));
    assert_eq!(BuildState::load(&build).unwrap().status("mid"), StepStatus::Failed);
    assert!(!build.join("2-sink").exists());

    let plan = emit_build_plan(&chain(tmp.path()), None, false).unwrap();
    let r = run_flow(&plan, &build, &RunOptions::default()).unwrap();
    assert!(r.is_success());
    assert_eq!(r.outcome("src"), Some(&Outcome::UpToDate));
    assert_eq!(r.executed, 2);
}

#[test]
fn keep_going_runs_independent_branches() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = "inputs: [a.txt]\noutputs: [b.txt]\ncommands: [\"false\"]\n";
    let other = "inputs: [a.txt]\noutputs: [d.txt]\ncommands: [\"cp inputs/a.txt outputs/d.txt\"]\n";
    let g = graph(
        tmp.path(),
        &[("src", SRC), ("mid", bad), ("sink", SINK), ("other", other)],
        &[("src", "mid"), ("mid", "sink"), ("src", "other")],
    );
    let plan = emit_build_plan(&g, None, false).unwrap();

    let stop = run_flow(&plan, &tmp.path().join("b1"), &RunOptions::default()).unwrap();
    assert_eq!(stop.outcome("other"), Some(&Outcome::Skipped));

    let opts = RunOptions {
        keep_going: true,
        ..RunOptions::default()
    };
    let r = run_flow(&plan, &tmp.path().join("b2"), &opts).unwrap();
    assert_eq!(r.outcome("other"), Some(&Outcome::Built));
    assert_eq!(r.outcome("sink"), Some(&Outcome::Skipped));
    assert!(matches!(r.outcome("mid"), Some(Outcome::Failed(_))));
}

#[test]
fn target_builds_only_ancestors() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = emit_build_plan(&chain(tmp.path()), None, false).unwrap();
    let build = tmp.path().join("build");
    let opts = RunOptions {
        target: Some("mid".into()),
        ..RunOptions::default()
    };
    let r = run_flow(&plan, &build, &opts).unwrap();
    assert_eq!(r.executed, 2);
    assert_eq!(r.outcome("sink"), None);
    assert!(!build.join("2-sink").exists());

    let opts = RunOptions {
        target: Some("nope".into()),
        ..RunOptions::default()
    };
    assert!(run_flow(&plan, &build, &opts).is_err());
}

#[test]
fn interrupted_step_is_rebuilt() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = emit_build_plan(&chain(tmp.path()), None, false).unwrap();
    let build = tmp.path().join("build");
    run_flow(&plan, &build, &RunOptions::default()).unwrap();

    // What a kill between dispatch and completion leaves behind.
    let mut state = BuildState::load(&build).unwrap();
    state.set(StepRecord {
        step: "mid".into(),
        status: StepStatus::Dirty,
        hash: None,
        outputs: Default::default(),
        timestamp: "2026-01-01T00:00:00Z".into(),
        inputs: None,
    });
    state.save(&build).unwrap();
    fs::write(build.join("1-mid/outputs/b.txt"), "half written").unwrap();

    let r = run_flow(&plan, &build, &RunOptions::default()).unwrap();
    assert_eq!(r.outcome("mid"), Some(&Outcome::Built));
    assert_eq!(r.outcome("src"), Some(&Outcome::UpToDate));
    assert_eq!(fs::read_to_string(build.join("1-mid/outputs/b.txt")).unwrap(), "a\nb\n");
}

#[test]
fn deleted_output_marks_step_dirty() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = emit_build_plan(&chain(tmp.path()), None, false).unwrap();
    let build = tmp.path().join("build");
    run_flow(&plan, &build, &RunOptions::default()).unwrap();
    fs::remove_file(build.join("0-src/outputs/a.txt")).unwrap();
    let r = run_flow(&plan, &build, &RunOptions::default()).unwrap();
    assert_eq!(r.outcome("src"), Some(&Outcome::Built));
    assert_eq!(r.executed, 3);
}

#[test]
fn step_sees_only_its_inputs_and_params() {
    let tmp = tempfile::tempdir().unwrap();
    let probe = "inputs: [a.txt]\noutputs: [env.txt]\nparameters:\n  clock_period: 1.5\n\
                 commands: [\"ls inputs > outputs/env.txt; echo $PARAM_CLOCK_PERIOD $FLOW_STEP >> outputs/env.txt\"]\n";
    let g = graph(tmp.path(), &[("src", SRC), ("probe", probe)], &[("src", "probe")]);
    let build = tmp.path().join("build");
    let r = run_flow(&emit_build_plan(&g, None, false).unwrap(), &build, &RunOptions::default()).unwrap();
    assert!(r.is_success(), "{:?}", r.errors);
    assert_eq!(fs::read_to_string(build.join("1-probe/outputs/env.txt")).unwrap(), "a.txt\n1.5 probe\n");
    assert_eq!(fs::read_to_string(build.join("1-probe/inputs/a.txt")).unwrap(), "a\n");
}

#[test]
fn missing_output_fails_step() {
    let tmp = tempfile::tempdir().unwrap();
    let g = graph(tmp.path(), &[("lazy", "inputs: []\noutputs: [x]\ncommands: [\"true\"]\n")], &[]);
    let r = run_flow(&emit_build_plan(&g, None, false).unwrap(), &tmp.path().join("b"), &RunOptions::default()).unwrap();
    assert!(matches!(&r.errors[..], [StepError::MissingOutput { port, .. }] if port == "x"));
}

#[test]
fn conditions_gate_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let pre = "outputs: [x]\npreconditions: ['exists(\"never.txt\")']\ncommands: [\"touch ran; echo > outputs/x\"]\n";
    let post = "outputs: [x]\npostconditions: ['metric(\"outputs/x\", \"v=([0-9]+)\") > 5']\ncommands: [\"echo v=3 > outputs/x\"]\n";
    let g = graph(tmp.path(), &[("pre", pre), ("post", post)], &[]);
    let build = tmp.path().join("b");
    let opts = RunOptions {
        keep_going: true,
        ..RunOptions::default()
    };
    let r = run_flow(&emit_build_plan(&g, None, false).unwrap(), &build, &opts).unwrap();
    assert_eq!(r.errors.len(), 2);
    assert!(r.errors.iter().any(|e| matches!(e, StepError::PreconditionFailed { step, .. } if step == "pre")));
    assert!(r.errors.iter().any(|e| matches!(e, StepError::PostconditionFailed { step, .. } if step == "post")));
    assert!(!build.join("1-pre/ran").exists());
}

#[test]
fn config_change_propagates_downstream() {
    let tmp = tempfile::tempdir().unwrap();
    let build = tmp.path().join("build");
    run_flow(&emit_build_plan(&chain(tmp.path()), None, false).unwrap(), &build, &RunOptions::default()).unwrap();
    let mut g = chain(tmp.path());
    g.set_param("mid", "effort", "high").unwrap();
    let r = run_flow(&emit_build_plan(&g, None, false).unwrap(), &build, &RunOptions::default()).unwrap();
    assert_eq!(r.outcome("src"), Some(&Outcome::UpToDate));
    assert_eq!(r.outcome("mid"), Some(&Outcome::Built));
    assert_eq!(r.outcome("sink"), Some(&Outcome::Built));
}

#[test]
fn exported_makefile_builds_the_chain() {
    if !Path::new("/usr/bin/make").exists() {
        eprintln!("make not installed; skipping");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let plan = emit_build_plan(&chain(tmp.path()), None, false).unwrap();
    let build = tmp.path().join("build");
    fs::create_dir_all(&build).unwrap();
    fs::write(build.join("Makefile"), export_makefile(&plan)).unwrap();
    let out = Command::new("make").arg("-s").current_dir(&build).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(build.join("2-sink/outputs/c.txt")).unwrap().trim(), "2");
    let again = Command::new("make").arg("-q").current_dir(&build).status().unwrap();
    assert!(again.success(), "make -q reports work left after a full build");
}
