// SPDX-License-Identifier: Apache-2.0

//! Acceptance gate. Each test prints one line:
//!
//! ```text
//! criterion N [label]: PASS|FAIL (detail)
//! ```
//!
//! Lines go to the process's stderr so they appear without `--nocapture`.

mod common;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use common::{annotation_mix, copy_dir, fixture, golden_corpus, node_name, our_bindings, tree_bytes, DagFlow, LiveTcl};
use pdflow::backend::{emit_build_plan, run_flow, Outcome, RunOptions};
use pdflow::flowspec::load_flow;
use pdflow::stash::Stash;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const SCALING_BLOCKS: usize = 1000;
const SCALING_NODES: usize = 100;
const SCALING_BOUND: Duration = Duration::from_secs(20);
const LATENCY_NODES: usize = 50;
const LATENCY_BOUND: Duration = Duration::from_millis(2200);
const DAG_TRIALS: usize = 100;
const DAG_MAX_NODES: usize = 20;
const MIN_CORPUS: usize = 50;
const MIXES: usize = 20;
const SWEEP_VALUES: usize = 3;

fn report(n: u32, label: &str, ok: bool, detail: &str) {
    let line = format!(
        "criterion {n} [{label}]: {} ({detail})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    // Bypasses libtest capture, which only hooks the print macros.
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "{}", line.trim_end());
}

fn flow_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flow"))
        .args(args)
        .output()
        .expect("flow binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// `N checks: P passed, F failures, U undecidable` from check output.
fn summary(out: &str) -> Option<(usize, usize, usize, usize)> {
    let line = out.lines().find(|l| l.contains(" checks: "))?;
    let nums: Vec<usize> = line
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().unwrap())
        .collect();
    match nums.as_slice() {
        [t, p, f, u] => Some((*t, *p, *f, *u)),
        _ => None,
    }
}

// ---------------------------------------------------------------------------

fn scaling_block(k: usize, props: usize, rng: &mut StdRng) -> String {
    let p = rng.random_range(2..9);
    let b = rng.random_range(1..20);
    let mut s = String::from("# mflowgen-intent begin\n");
    let all = [
        format!("mflowgen.assert {{$w{k} % $p{k} == 0}}"),
        format!("mflowgen.assert {{$h{k} > 0}}"),
        format!("mflowgen.assert {{[llength $cells{k}] == 4}}"),
        format!("mflowgen.assert {{$area{k} >= $w{k} && $status{k} eq \"ok\"}}"),
    ];
    for a in &all[..props] {
        writeln!(s, "{a}").unwrap();
    }
    s.push_str("# mflowgen-intent end\n# mflowgen-impl begin\n");
    write!(
        s,
        "set p{k} {p}
set base{k} {b}
set tile{k} 1.4
set w{k} [expr {{$p{k} * ($base{k} + 1)}}]
set h{k} [expr {{$tile{k} * 2}}]
set cells{k} [list INV_X1 NAND2_X1 DFF_X1 BUF_X2]
set area{k} [expr {{$w{k} * $h{k}}}]
set acc{k} 0
foreach c $cells{k} {{
    incr acc{k}
}}
if {{$acc{k} == 4}} {{
    set status{k} ok
}} else {{
    set status{k} bad
}}
set half{k} [expr {{$w{k} / 2.0}}]
set top{k} [lindex $cells{k} end]
set margin{k} [expr {{max($half{k}, 1) - min($h{k}, 0)}}]
set ratio{k} [expr {{double($area{k}) / ($h{k} + 1)}}]
set flag{k} [expr {{$margin{k} > 0 && $ratio{k} > 0 ? 1 : 0}}]
set rounded{k} [expr {{round($ratio{k})}}]
# mflowgen-impl end

"
    )
    .unwrap();
    s
}

#[test]
fn criterion_1_static_check_scaling() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut rng = StdRng::seed_from_u64(1);
    let mut flow = String::from("design_name: scaling\nnodes:\n");
    let mut properties = 0;
    let per_node = SCALING_BLOCKS / SCALING_NODES;
    for n in 0..SCALING_NODES {
        let name = format!("block-node-{n:03}");
        let dir = root.join("nodes").join(&name);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("configure.yml"), format!("name: {name}\noutputs: [out.txt]\n")).unwrap();
        let mut tcl = String::new();
        for b in 0..per_node {
            let props = rng.random_range(2..=4);
            properties += props;
            tcl.push_str(&scaling_block(n * per_node + b, props, &mut rng));
        }
        fs::write(dir.join("blocks.tcl"), tcl).unwrap();
        writeln!(flow, "  - nodes/{name}").unwrap();
    }
    fs::write(root.join("flow.yml"), flow).unwrap();

    let t = Instant::now();
    let out = flow_cmd(&["--flow", root.to_str().unwrap(), "check"]);
    let elapsed = t.elapsed();
    let stdout = text(&out.stdout);
    let sum = summary(&stdout);
    let ok = out.status.code() == Some(0) && sum == Some((properties, properties, 0, 0)) && elapsed < SCALING_BOUND;
    report(
        1,
        "static-check scaling",
        ok,
        &format!(
            "{SCALING_BLOCKS} blocks over {SCALING_NODES} nodes, {properties} properties, {:.2} s < {} s, summary {sum:?}",
            elapsed.as_secs_f64(),
            SCALING_BOUND.as_secs()
        ),
    );
}

#[test]
fn criterion_2_static_check_latency() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::write(
        root.join("tech.yml"),
        "stdcells: [INV_X1, NAND2_X1, DFF_X1, BUF_X2]\nmetal_layers: [M1, M2, M3, M4]\n\
         track_pitch_x: 0.19\ntrack_pitch_y: 0.14\ntime_unit: ns\nconstants:\n  tile_height: 1.4\n",
    )
    .unwrap();
    let cells = ["INV_X1", "NAND2_X1", "DFF_X1", "BUF_X2"];
    let mut flow = String::from("design_name: latency\nnodes:\n");
    let mut links = String::from("connect_by_name:\n");
    let (mut annotations, mut blocks) = (0, 0);
    for i in 0..LATENCY_NODES {
        let name = format!("stage-{i:02}");
        let dir = root.join("nodes").join(&name);
        fs::create_dir_all(&dir).unwrap();
        let cfg = if i == 0 {
            format!("name: {name}\noutputs: [design.db]\n")
        } else {
            format!(
                "name: {name}\ninputs: [design.db]\noutputs: [design.db]\n\
                 commands: [\"cp inputs/design.db outputs/design.db\"]\nopaque_commands: [run_tool]\n"
            )
        };
        fs::write(dir.join("configure.yml"), cfg).unwrap();
        let mut tcl = format!("mflowgen.enum.stdcell {}\nrun_tool -stage {i}\n", cells[i % cells.len()]);
        annotations += 1;
        if i % 5 == 0 {
            tcl.push_str(&format!(
                "# mflowgen-intent begin\nmflowgen.assert {{$rows_{i} % 2 == 0}}\n# mflowgen-intent end\n\
                 # mflowgen-impl begin\nset row_h $tile_height\nset rows_{i} [expr {{2 * {}}}]\n# mflowgen-impl end\n\
                 mflowgen.equality.tile_height $row_h\n",
                i + 1
            ));
            annotations += 1;
            blocks += 1;
        }
        fs::write(dir.join("stage.tcl"), tcl).unwrap();
        writeln!(flow, "  - nodes/{name}").unwrap();
        if i > 0 {
            writeln!(links, "  - [stage-{:02}, {name}]", i - 1).unwrap();
        }
    }
    fs::write(root.join("flow.yml"), flow + &links).unwrap();

    let t = Instant::now();
    let out = flow_cmd(&["--flow", root.to_str().unwrap(), "check"]);
    let elapsed = t.elapsed();
    let sum = summary(&text(&out.stdout));
    let ok = out.status.code() == Some(0)
        && sum.is_some_and(|(_, _, f, u)| f == 0 && u == 0)
        && elapsed <= LATENCY_BOUND;
    report(
        2,
        "static-check latency",
        ok,
        &format!(
            "{LATENCY_NODES} nodes, {annotations} annotations, {blocks} intent blocks, {:.3} s <= {:.1} s, summary {sum:?}",
            elapsed.as_secs_f64(),
            LATENCY_BOUND.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------

fn run_opts() -> RunOptions {
    RunOptions {
        jobs: 4,
        ..RunOptions::default()
    }
}

#[test]
fn criterion_3_never_rebuild() {
    let mut passed = 0;
    let mut failures = Vec::new();
    for trial in 0..DAG_TRIALS {
        let mut rng = StdRng::seed_from_u64(3000 + trial as u64);
        let tmp = tempfile::tempdir().unwrap();
        let build = tmp.path().join("build");
        let stash = Stash::open(&tmp.path().join("stash")).unwrap();
        let mut dag = DagFlow::random(&tmp.path().join("flow"), &mut rng, DAG_MAX_NODES);
        let plan = emit_build_plan(&dag.graph(), None, false).unwrap();
        assert!(run_flow(&plan, &build, &run_opts()).unwrap().is_success());

        let p = rng.random_range(0..dag.n);
        let pname = node_name(p);
        let id = stash.push(&plan, &build, &pname, "acceptance", "").unwrap().id;

        let ancestors: Vec<usize> = dag.ancestors(p).into_iter().collect();
        let mut edited = 0;
        for &a in &ancestors {
            if rng.random_bool(0.5) {
                dag.edit(a);
                edited += 1;
            }
        }
        if edited == 0 {
            if let Some(&a) = ancestors.first() {
                dag.edit(a);
            }
        }
        // Vary the built state of everything upstream.
        match rng.random_range(0..3) {
            0 => {}
            1 => fs::remove_file(build.join(pdflow::backend::STATE_FILE)).unwrap(),
            _ => {
                for &a in &ancestors {
                    let dir = plan.step(&node_name(a)).unwrap().dir.clone();
                    let _ = fs::remove_dir_all(build.join(dir));
                }
            }
        }
        dag.take_log();

        let mut g = dag.graph();
        g.mark_prebuilt(&pname, &id, &stash).unwrap();
        let plan = emit_build_plan(&g, None, false).unwrap();
        let r = run_flow(&plan, &build, &run_opts()).unwrap();
        let log = dag.take_log();
        if !log.contains(&pname) && r.outcome(&pname) == Some(&Outcome::PreBuilt) && r.is_success() {
            passed += 1;
        } else {
            failures.push(format!("trial {trial}: {pname} outcome {:?}, log {log:?}", r.outcome(&pname)));
        }
    }
    report(
        3,
        "never-rebuild",
        passed == DAG_TRIALS,
        &format!("{passed}/{DAG_TRIALS} trials{}", failures.first().map_or(String::new(), |f| format!("; {f}"))),
    );
}

#[test]
fn criterion_4_incremental_minimality() {
    let mut passed = 0;
    let mut failures = Vec::new();
    for trial in 0..DAG_TRIALS {
        let mut rng = StdRng::seed_from_u64(4000 + trial as u64);
        let tmp = tempfile::tempdir().unwrap();
        let build = tmp.path().join("build");
        let stash = Stash::open(&tmp.path().join("stash")).unwrap();
        let mut dag = DagFlow::random(&tmp.path().join("flow"), &mut rng, DAG_MAX_NODES);
        let plan = emit_build_plan(&dag.graph(), None, false).unwrap();
        assert!(run_flow(&plan, &build, &run_opts()).unwrap().is_success());

        let mut prebuilt = BTreeSet::new();
        if dag.n > 2 && rng.random_bool(0.5) {
            for _ in 0..rng.random_range(1..=2) {
                prebuilt.insert(rng.random_range(0..dag.n));
            }
        }
        let ids: Vec<(usize, String)> = prebuilt
            .iter()
            .map(|&i| (i, stash.push(&plan, &build, &node_name(i), "acceptance", "").unwrap().id))
            .collect();
        let graph = |dag: &DagFlow| {
            let mut g = dag.graph();
            for (i, id) in &ids {
                g.mark_prebuilt(&node_name(*i), id, &stash).unwrap();
            }
            g
        };
        let settle = run_flow(&emit_build_plan(&graph(&dag), None, false).unwrap(), &build, &run_opts()).unwrap();
        dag.take_log();

        let candidates: Vec<usize> = (0..dag.n).filter(|i| !prebuilt.contains(i)).collect();
        let e = candidates[rng.random_range(0..candidates.len())];
        dag.edit(e);
        let r = run_flow(&emit_build_plan(&graph(&dag), None, false).unwrap(), &build, &run_opts()).unwrap();
        let executed = dag.take_log();

        let mut expected: BTreeSet<String> = dag.descendants(e, &prebuilt).into_iter().map(node_name).collect();
        expected.insert(node_name(e));
        if settle.executed == 0 && executed == expected && r.executed == expected.len() && r.is_success() {
            passed += 1;
        } else {
            failures.push(format!(
                "trial {trial}: edited {}, settle ran {}, expected {expected:?}, executed {executed:?}",
                node_name(e),
                settle.executed
            ));
        }
    }
    report(
        4,
        "incremental minimality",
        passed == DAG_TRIALS,
        &format!("{passed}/{DAG_TRIALS} trials{}", failures.first().map_or(String::new(), |f| format!("; {f}"))),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_5_tcl_oracle_equivalence() {
    let corpus = golden_corpus();
    let mut corpus_ok = 0;
    let mut problems = Vec::new();
    for c in &corpus {
        let ours = our_bindings(&c.src).ok();
        if ours == c.vars {
            corpus_ok += 1;
        } else {
            problems.push(c.name.clone());
        }
    }
    let live = LiveTcl::get();
    let mut live_ok = 0;
    if let Some(tcl) = live {
        for c in &corpus {
            if tcl.bindings(&c.src, &[]).ok() == c.vars {
                live_ok += 1;
            } else {
                problems.push(format!("{} (frozen value differs from libtcl)", c.name));
            }
        }
    }

    let mut rng = StdRng::seed_from_u64(5);
    let mut mixes_ok = 0;
    for m in 0..MIXES {
        let (plain, mixed, procs) = annotation_mix(&mut rng);
        let strip = |mut v: std::collections::BTreeMap<String, String>| {
            let t = v.remove("t");
            (v, t.is_none_or(|t| t.is_empty()))
        };
        let base = our_bindings(&plain);
        let ours = our_bindings(&mixed).map(strip);
        let mut ok = matches!((&base, &ours), (Ok(b), Ok((o, true))) if b == o);
        if let Some(tcl) = live {
            let procs: Vec<&str> = procs.iter().map(String::as_str).collect();
            let reference = tcl.bindings(&mixed, &procs).map(strip);
            ok &= matches!((&base, &reference), (Ok(b), Ok((r, true))) if b == r);
        }
        if ok {
            mixes_ok += 1;
        } else {
            problems.push(format!("mix {m}"));
        }
    }

    let ok = corpus.len() >= MIN_CORPUS
        && corpus_ok == corpus.len()
        && (live.is_none() || live_ok == corpus.len())
        && mixes_ok == MIXES;
    report(
        5,
        "tcl oracle equivalence",
        ok,
        &format!(
            "corpus {corpus_ok}/{} (>= {MIN_CORPUS}), live libtcl {}, pass-through {mixes_ok}/{MIXES}{}",
            corpus.len(),
            if live.is_some() { format!("{live_ok}/{}", corpus.len()) } else { "unavailable".into() },
            if problems.is_empty() { String::new() } else { format!("; {problems:?}") }
        ),
    );
}

// ---------------------------------------------------------------------------

fn mock_copy(dst: &Path) {
    copy_dir(&fixture("mock-flow"), dst);
}

#[test]
fn criterion_6_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let flow_dir = tmp.path().join("flow");
    mock_copy(&flow_dir);
    let f = flow_dir.to_str().unwrap();

    let first = flow_cmd(&["--flow", f, "run"]);
    let first_out = text(&first.stdout);
    let flow = load_flow(&flow_dir).unwrap();
    let plan = emit_build_plan(&flow.graph, None, false).unwrap();
    let build = flow_dir.join("build");
    let missing: Vec<String> = plan
        .steps
        .iter()
        .flat_map(|s| s.outputs.iter().map(move |o| format!("{}/outputs/{o}", s.dir)))
        .filter(|p| !build.join(p).is_file())
        .collect();
    let built = first.status.code() == Some(0) && first_out.contains("5 steps executed") && missing.is_empty();

    let again = flow_cmd(&["--flow", f, "run"]);
    let rerun_zero = again.status.code() == Some(0) && text(&again.stdout).contains("0 steps executed");

    let faulty = tmp.path().join("faulty");
    mock_copy(&faulty);
    let place = faulty.join("nodes/fake-place/place.tcl");
    let mut src = fs::read_to_string(&place).unwrap();
    src.push_str("mflowgen.enum.stdcell NOT_A_CELL_X9\n");
    fs::write(&place, src).unwrap();
    let ff = faulty.to_str().unwrap();
    let check = flow_cmd(&["--flow", ff, "check"]);
    let check_out = text(&check.stdout);
    let fails = check_out.lines().filter(|l| l.starts_with("FAIL")).count();
    let blocked = flow_cmd(&["--flow", ff, "run"]);
    let nothing_ran = !faulty.join("build").exists();
    let fault_ok = check.status.code() == Some(1)
        && fails == 1
        && summary(&check_out).is_some_and(|(_, _, f, _)| f == 1)
        && blocked.status.code() == Some(1)
        && nothing_ran;

    report(
        6,
        "end-to-end mock flow",
        built && rerun_zero && fault_ok,
        &format!(
            "first run exit {:?} with {} missing outputs; rerun exit {:?} '{}'; fault: check exit {:?} with {fails} FAIL, run exit {:?}, build dir created: {}",
            first.status.code(),
            missing.len(),
            again.status.code(),
            text(&again.stdout).trim(),
            check.status.code(),
            blocked.status.code(),
            !nothing_ran
        ),
    );
}

#[test]
fn criterion_7_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let flow_dir = tmp.path().join("flow");
    mock_copy(&flow_dir);
    let f = flow_dir.to_str().unwrap();
    let b1 = tmp.path().join("b1");
    let b4 = tmp.path().join("b4");
    let r1 = flow_cmd(&["--flow", f, "run", "-j", "1", "--build-dir", b1.to_str().unwrap()]);
    let r4 = flow_cmd(&["--flow", f, "run", "-j", "4", "--build-dir", b4.to_str().unwrap()]);

    let flow = load_flow(&flow_dir).unwrap();
    let plan = emit_build_plan(&flow.graph, None, false).unwrap();
    let mut differing = Vec::new();
    let mut files = 0;
    for s in &plan.steps {
        let a = tree_bytes(&b1.join(&s.dir).join("outputs"));
        let b = tree_bytes(&b4.join(&s.dir).join("outputs"));
        files += a.len();
        if a != b || a.is_empty() {
            differing.push(s.dir.clone());
        }
    }
    let dot1 = flow_cmd(&["--flow", f, "graph"]);
    let dot_file = tmp.path().join("g.dot");
    let dot2 = flow_cmd(&["--flow", f, "graph", "-o", dot_file.to_str().unwrap()]);
    let dots_equal = dot1.status.success()
        && dot2.status.success()
        && text(&dot1.stdout) == fs::read_to_string(&dot_file).unwrap()
        && text(&dot1.stdout) == flow.graph.export_dot().unwrap();

    report(
        7,
        "determinism",
        r1.status.success() && r4.status.success() && differing.is_empty() && dots_equal,
        &format!(
            "{files} output files across {} steps, differing steps {differing:?}, dot exports identical: {dots_equal}",
            plan.len()
        ),
    );
}

#[test]
fn criterion_8_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let flow_dir = tmp.path().join("flow");
    mock_copy(&flow_dir);
    let sweep = flow_dir.join("sweep.yml");

    // Closed form from the unswept flow: nodes outside the swept node's
    // downstream closure appear once, the closure once per value.
    let base = load_flow(&flow_dir.join("flow.yml")).unwrap();
    let closure = {
        let mut seen = BTreeSet::from(["fake-synth".to_string()]);
        loop {
            let before = seen.len();
            for e in base.graph.edges() {
                if seen.contains(&e.src.node) {
                    seen.insert(e.dst.node.clone());
                }
            }
            if seen.len() == before {
                break;
            }
        }
        seen.len()
    };
    let expected_steps = (base.graph.len() - closure) + SWEEP_VALUES * closure;

    let out = flow_cmd(&["--flow", sweep.to_str().unwrap(), "run", "-j", "4"]);
    let stdout = text(&out.stdout);
    let flow = load_flow(&sweep).unwrap();
    let plan = emit_build_plan(&flow.graph, None, false).unwrap();
    let terminals: Vec<_> = plan
        .steps
        .iter()
        .filter(|s| flow.graph.outgoing(&s.name).is_empty())
        .collect();
    let reports: BTreeSet<String> = terminals
        .iter()
        .filter_map(|s| fs::read_to_string(flow_dir.join("build").join(&s.dir).join("outputs/signoff.rpt")).ok())
        .collect();
    let ok = out.status.success()
        && plan.len() == expected_steps
        && stdout.contains(&format!("{expected_steps} steps executed"))
        && terminals.len() == SWEEP_VALUES
        && reports.len() == SWEEP_VALUES;
    report(
        8,
        "sweep correctness",
        ok,
        &format!(
            "{} steps planned, closed form {} + {SWEEP_VALUES} x {closure} = {expected_steps}; {} terminal steps with {} distinct reports",
            plan.len(),
            base.graph.len() - closure,
            terminals.len(),
            reports.len()
        ),
    );
}
