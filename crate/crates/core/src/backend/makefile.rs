// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;

use super::plan::{BuildPlan, PlanStep};

/// Quote for `sh`, then escape for make.
fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''")).replace('$', "$$")
}

fn stamp(step: &PlanStep) -> String {
    format!("{}/.stamp", step.dir)
}

/// Render the plan as a Makefile, one stamp target per step. The export
/// reruns steps by timestamp, not content hash, and leaves out pre- and
/// postconditions.
pub fn export_makefile(plan: &BuildPlan) -> String {
    let mut out = String::new();
    let all: Vec<String> = plan.steps.iter().map(stamp).collect();
    writeln!(out, ".PHONY: all\nall: {}\n", all.join(" ")).unwrap();
    for step in &plan.steps {
        let deps: Vec<String> = step
            .upstream()
            .into_iter()
            .map(|u| stamp(plan.step(u).expect("planned")))
            .collect();
        writeln!(out, "{}: {}", stamp(step), deps.join(" ")).unwrap();
        writeln!(out, "\trm -rf {0} && mkdir -p {0}", step.dir).unwrap();
        if let Some(p) = &step.prebuilt {
            writeln!(out, "\tln -s {} {}/outputs", quote(&p.payload_dir.display().to_string()), step.dir).unwrap();
        } else {
            let src = step.config.source_dir.display().to_string();
            if !src.is_empty() {
                writeln!(out, "\tcp -R {}/. {}/", quote(&src), step.dir).unwrap();
            }
            writeln!(out, "\tmkdir -p {0}/inputs {0}/outputs {0}/logs", step.dir).unwrap();
            for b in &step.inputs {
                let up = plan.step(&b.from_step).expect("planned");
                writeln!(
                    out,
                    "\tln -s $(abspath {}/outputs/{}) {}/inputs/{}",
                    up.dir, b.from_port, step.dir, b.port
                )
                .unwrap();
            }
            let env: Vec<String> = step
                .params
                .iter()
                .map(|(k, v)| format!("{}={}", PlanStep::param_env(k), quote(v)))
                .collect();
            let env = if env.is_empty() { String::new() } else { format!("{} ", env.join(" ")) };
            for cmd in &step.commands {
                writeln!(out, "\tcd {} && {env}sh -e -c {} >> logs/run.log 2>&1", step.dir, quote(cmd)).unwrap();
            }
            if step.commands.is_empty() {
                for port in &step.outputs {
                    writeln!(out, "\tcp -R {0}/{1} {0}/outputs/{1}", step.dir, port).unwrap();
                }
            }
        }
        writeln!(out, "\ttouch $@\n").unwrap();
    }
    out
}
