// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use pdflow::graph::FlowGraph;
use pdflow::node::parse_node_config;
use rand::rngs::StdRng;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn copy_dir(src: &Path, dst: &Path) {
    for entry in walkdir::WalkDir::new(src) {
        let entry = entry.unwrap();
        let target = dst.join(entry.path().strip_prefix(src).unwrap());
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target).unwrap();
        } else {
            fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// Every regular file under `dir` with its bytes, keyed by relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .follow_links(true)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_path_buf(), fs::read(e.path()).unwrap()))
        .collect()
}

// ---------------------------------------------------------------------------
// Reference Tcl, loaded from the system library when present.

type FindExecutable = unsafe extern "C" fn(*const c_char);
type CreateInterp = unsafe extern "C" fn() -> *mut c_void;
type InterpFn = unsafe extern "C" fn(*mut c_void) -> c_int;
type Eval = unsafe extern "C" fn(*mut c_void, *const c_char) -> c_int;
type GetStringResult = unsafe extern "C" fn(*mut c_void) -> *const c_char;
type DeleteInterp = unsafe extern "C" fn(*mut c_void);

pub struct LiveTcl {
    _lib: libloading::Library,
    create: CreateInterp,
    init: InterpFn,
    eval: Eval,
    result: GetStringResult,
    delete: DeleteInterp,
}

// The function pointers are plain C entry points; each call creates and
// destroys its own interpreter on the calling thread.
unsafe impl Send for LiveTcl {}
unsafe impl Sync for LiveTcl {}

const TCL_OK: c_int = 0;

/// Collect globals created by the fragment as `len:name len:value` records.
const DUMP: &str = r#"
set __out {}
foreach __v [lsort [info globals]] {
    if {[lsearch -exact $__before $__v] >= 0 || $__v eq "__before" || $__v eq "__out" || $__v eq "__v"} continue
    if {[array exists $__v]} continue
    append __out [string length $__v] : $__v [string length [set $__v]] : [set $__v]
}
set __out
"#;

impl LiveTcl {
    pub fn get() -> Option<&'static LiveTcl> {
        static TCL: OnceLock<Option<LiveTcl>> = OnceLock::new();
        TCL.get_or_init(|| {
            let candidates = [
                "libtcl8.6.so",
                "/usr/lib/x86_64-linux-gnu/libtcl8.6.so",
                "/usr/lib/aarch64-linux-gnu/libtcl8.6.so",
                "/usr/lib/libtcl8.6.so",
                "libtcl8.6.dylib",
            ];
            for c in candidates {
                // SAFETY: loading a shared library runs its initializers;
                // libtcl has no unusual ones.
                let Ok(lib) = (unsafe { libloading::Library::new(c) }) else { continue };
                // SAFETY: symbol types match the Tcl 8.6 C API.
                unsafe {
                    let find: FindExecutable = *lib.get(b"Tcl_FindExecutable\0").ok()?;
                    let t = LiveTcl {
                        create: *lib.get(b"Tcl_CreateInterp\0").ok()?,
                        init: *lib.get(b"Tcl_Init\0").ok()?,
                        eval: *lib.get(b"Tcl_Eval\0").ok()?,
                        result: *lib.get(b"Tcl_GetStringResult\0").ok()?,
                        delete: *lib.get(b"Tcl_DeleteInterp\0").ok()?,
                        _lib: lib,
                    };
                    find(std::ptr::null());
                    return Some(t);
                }
            }
            None
        })
        .as_ref()
    }

    /// Evaluate `src` in a fresh interpreter with `procs` predefined and
    /// return the new global scalar variables, or the error message.
    pub fn bindings(&self, src: &str, procs: &[&str]) -> Result<BTreeMap<String, String>, String> {
        // SAFETY: the interpreter is created, used and deleted on this thread.
        unsafe {
            let interp = (self.create)();
            let _ = (self.init)(interp);
            let run = |script: &str| -> Result<String, String> {
                let c = CString::new(script).map_err(|e| e.to_string())?;
                let code = (self.eval)(interp, c.as_ptr());
                let res = CStr::from_ptr((self.result)(interp)).to_string_lossy().into_owned();
                if code == TCL_OK {
                    Ok(res)
                } else {
                    Err(res)
                }
            };
            let out = (|| {
                run("set __before [info globals]")?;
                for p in procs {
                    run(&format!("proc {p} args {{}}"))?;
                }
                run(src)?;
                run(DUMP)
            })();
            (self.delete)(interp);
            out.map(|dump| parse_dump(&dump))
        }
    }
}

fn parse_dump(mut s: &str) -> BTreeMap<String, String> {
    let take = |s: &mut &str| -> String {
        let (len, rest) = s.split_once(':').expect("length prefix");
        let n: usize = len.parse().expect("numeric length");
        // Lengths count characters.
        let end = rest.char_indices().nth(n).map_or(rest.len(), |(i, _)| i);
        let (v, tail) = rest.split_at(end);
        *s = tail;
        v.to_string()
    };
    let mut out = BTreeMap::new();
    while !s.is_empty() {
        let k = take(&mut s);
        let v = take(&mut s);
        out.insert(k, v);
    }
    out
}

/// Variables from our evaluator, same shape as [`LiveTcl::bindings`].
pub fn our_bindings(src: &str) -> Result<BTreeMap<String, String>, String> {
    let ctx = pdflow::tcl::eval_tcl_fragment(src, &pdflow::tcl::TclContext::new()).map_err(|e| e.to_string())?;
    Ok(ctx
        .vars()
        .iter()
        .map(|(k, v)| (k.clone(), v.as_str().to_string()))
        .collect())
}

#[derive(serde::Deserialize, serde::Serialize, Clone)]
pub struct GoldenCase {
    pub name: String,
    pub src: String,
    /// Expected globals; absent when the fragment must raise an error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vars: Option<BTreeMap<String, String>>,
}

pub fn golden_corpus() -> Vec<GoldenCase> {
    let text = fs::read_to_string(fixture("tcl-golden.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// A random fragment from the supported subset, with annotation calls
/// sprinkled between its commands. Returns the plain fragment, the mixed
/// one, and the annotation proc names the mix uses.
pub fn annotation_mix(rng: &mut StdRng) -> (String, String, Vec<String>) {
    // `a` and `b` stay positive integers so they are always safe operands.
    let targets = ["c", "pitch", "rows"];
    let mut plain = Vec::new();
    plain.push(format!("set a {}", rng.random_range(1..50)));
    plain.push(format!("set b {}", rng.random_range(1..9)));
    for _ in 0..rng.random_range(4..10) {
        let v = targets[rng.random_range(0..targets.len())];
        let x = ["a", "b"][rng.random_range(0..2)];
        let y = ["a", "b"][rng.random_range(0..2)];
        plain.push(match rng.random_range(0..8) {
            0 => format!("set {v} [expr {{${x} * {} + ${y}}}]", rng.random_range(1..7)),
            1 => format!("set {v} [expr {{${x} % ${y} == 0 ? ${x} : ${y} / 2.0}}]"),
            2 => format!("incr {x}"),
            3 => format!("set {v} [list ${x} {{${y}}} \"${x} ${y}\"]"),
            4 => format!("if {{${x} > ${y}}} {{set {v} hi}} elseif {{${x} == ${y}}} {{set {v} eq}} else {{set {v} lo}}"),
            5 => format!("foreach i {{1 2 3}} {{set {v} [expr {{${x} + $i}}]}}"),
            6 => format!("set {v} [lindex [list ${x} ${y} q] end-{}]", rng.random_range(0..3)),
            _ => format!("set {v} [llength [list ${x} ${y} q]]"),
        });
    }
    let kinds = [
        "mflowgen.enum.stdcell",
        "mflowgen.enum.metal_layer",
        "mflowgen.equality.tile_height",
        "mflowgen.assert",
    ];
    let mut used = BTreeSet::new();
    let mut mixed = Vec::new();
    for (i, line) in plain.iter().enumerate() {
        // Annotation arguments read `$a`, so nothing goes before `a` and `b` exist.
        if i >= 2 && rng.random_bool(0.6) {
            let k = kinds[rng.random_range(0..kinds.len())];
            used.insert(k.to_string());
            let arg = match k {
                "mflowgen.enum.stdcell" => "INV_X1".to_string(),
                "mflowgen.enum.metal_layer" => "M2".to_string(),
                "mflowgen.equality.tile_height" => "$a".to_string(),
                _ => "{$a > 0}".to_string(),
            };
            mixed.push(if rng.random_bool(0.5) {
                format!("{k} {arg}")
            } else {
                format!("set t [{k} {arg}]")
            });
        }
        mixed.push(line.clone());
    }
    (plain.join("\n") + "\n", mixed.join("\n") + "\n", used.into_iter().collect())
}

// ---------------------------------------------------------------------------
// Random DAG flows: node i outputs `o<i>` and reads `o<j>` from each
// predecessor j. Its command runs `run.sh`, which appends the node name to a
// shared execution log.

pub struct DagFlow {
    pub root: PathBuf,
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub log: PathBuf,
    revs: Vec<u32>,
}

pub fn node_name(i: usize) -> String {
    format!("n{i:02}")
}

impl DagFlow {
    pub fn random(root: &Path, rng: &mut StdRng, max_nodes: usize) -> DagFlow {
        let n = rng.random_range(2..=max_nodes);
        let p = rng.random_range(0.1..0.5);
        let mut edges = BTreeSet::new();
        for j in 1..n {
            for i in 0..j {
                if rng.random_bool(p) {
                    edges.insert((i, j));
                }
            }
        }
        let flow = DagFlow {
            root: root.to_path_buf(),
            n,
            edges,
            log: root.join("exec.log"),
            revs: vec![0; n],
        };
        for i in 0..n {
            flow.write_node(i);
        }
        flow
    }

    pub fn preds(&self, j: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == j).map(|e| e.0).collect()
    }

    fn write_node(&self, i: usize) {
        let name = node_name(i);
        let dir = self.root.join("nodes").join(&name);
        fs::create_dir_all(&dir).unwrap();
        let inputs: Vec<String> = self.preds(i).iter().map(|j| format!("o{j:02}")).collect();
        let cfg = format!(
            "name: {name}\ninputs: [{}]\noutputs: [o{i:02}]\ncommands: [\"sh run.sh\"]\n",
            inputs.join(", ")
        );
        fs::write(dir.join("configure.yml"), cfg).unwrap();
        let mut script = format!("# {name} revision {}\n: > outputs/o{i:02}\n", self.revs[i]);
        for inp in &inputs {
            script.push_str(&format!("cat inputs/{inp} >> outputs/o{i:02}\n"));
        }
        script.push_str(&format!("echo '{name} r{}' >> outputs/o{i:02}\n", self.revs[i]));
        script.push_str(&format!("echo {name} >> '{}'\n", self.log.display()));
        fs::write(dir.join("run.sh"), script).unwrap();
    }

    /// Change node `i`'s script bytes.
    pub fn edit(&mut self, i: usize) {
        self.revs[i] += 1;
        self.write_node(i);
    }

    pub fn graph(&self) -> FlowGraph {
        let mut g = FlowGraph::new();
        for i in 0..self.n {
            let cfg = parse_node_config(&self.root.join("nodes").join(node_name(i))).unwrap();
            g.add_node(cfg, None).unwrap();
        }
        for &(i, j) in &self.edges {
            assert_eq!(g.connect_by_name(&node_name(i), &node_name(j)).unwrap(), 1);
        }
        g
    }

    /// Node names the log recorded since it was last cleared.
    pub fn take_log(&self) -> BTreeSet<String> {
        let text = fs::read_to_string(&self.log).unwrap_or_default();
        let _ = fs::remove_file(&self.log);
        text.lines().map(str::to_string).collect()
    }

    /// Brute-force descendants of `i`, following only edges that survive
    /// when the nodes in `prebuilt` lose their inputs.
    pub fn descendants(&self, i: usize, prebuilt: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![i];
        while let Some(x) = frontier.pop() {
            for &(a, b) in &self.edges {
                if a == x && !prebuilt.contains(&b) && out.insert(b) {
                    frontier.push(b);
                }
            }
        }
        out
    }

    pub fn ancestors(&self, i: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![i];
        while let Some(x) = frontier.pop() {
            for &(a, b) in &self.edges {
                if b == x && out.insert(a) {
                    frontier.push(a);
                }
            }
        }
        out
    }
}
