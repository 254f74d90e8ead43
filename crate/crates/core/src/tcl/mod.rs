// SPDX-License-Identifier: Apache-2.0

//! A sandboxed interpreter for a small, side-effect-free subset of Tcl.
//!
//! Supported commands: `set`, `expr`, `proc`, `if`, `foreach`, `incr`,
//! `list`, `lindex`, `llength`. Procedures defined with `proc` are recorded
//! but never run: calling one evaluates its arguments and returns the empty
//! string, which is exactly how annotation procs behave. Commands whose name
//! starts with `mflowgen.` and commands declared opaque are handled the same
//! way. Anything else aborts evaluation with [`TclErrorKind::UnsupportedCommand`].
//!
//! Nothing here touches the filesystem, the environment, or the network.
//!
//! ```
//! use pdflow::tcl::{eval_tcl_fragment, TclContext};
//!
//! let ctx = eval_tcl_fragment("set x 4; set y [expr {3 * $x}]", &TclContext::new()).unwrap();
//! assert_eq!(ctx.get_var("y").unwrap().as_str(), "12");
//! ```

mod error;
mod expr;
mod list;
mod parse;
mod value;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

pub use error::{TclError, TclErrorKind};
pub use list::{list_format, list_parse};
pub use parse::{parse_script, Command, ParseError, Part, Word, WordBody};
pub use value::{format_double, parse_bool, parse_number, Number, TclValue};

/// Prefix shared by every annotation command.
pub const ANNOTATION_PREFIX: &str = "mflowgen.";

const MAX_DEPTH: usize = 200;

/// A recorded (never executed) procedure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcDef {
    pub params: String,
    pub body: String,
    pub line: usize,
}

/// Interpreter state: global variables, recorded procs, and the set of
/// opaque command names tolerated as no-ops.
#[derive(Debug, Clone, Default)]
pub struct TclContext {
    vars: BTreeMap<String, TclValue>,
    procs: BTreeMap<String, ProcDef>,
    opaque: BTreeSet<String>,
    source: Option<PathBuf>,
    depth: usize,
}

/// Evaluate `src` on a copy of `ctx` and return the resulting context.
pub fn eval_tcl_fragment(src: &str, ctx: &TclContext) -> Result<TclContext, TclError> {
    let mut next = ctx.clone();
    next.eval(src)?;
    Ok(next)
}

impl TclContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Attribute errors to `path`.
    pub fn with_source(mut self, path: impl Into<PathBuf>) -> Self {
        self.source = Some(path.into());
        self
    }

    pub fn set_source(&mut self, path: Option<PathBuf>) {
        self.source = path;
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    /// Declare command names that evaluate their arguments and return "".
    pub fn allow_opaque<I, S>(&mut self, names: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.opaque.extend(names.into_iter().map(Into::into));
    }

    pub fn set_var(&mut self, name: impl Into<String>, value: impl Into<TclValue>) {
        self.vars.insert(name.into(), value.into());
    }

    pub fn get_var(&self, name: &str) -> Option<&TclValue> {
        self.vars.get(name)
    }

    pub fn vars(&self) -> &BTreeMap<String, TclValue> {
        &self.vars
    }

    pub fn procs(&self) -> &BTreeMap<String, ProcDef> {
        &self.procs
    }

    /// Evaluate a script starting at line 1.
    pub fn eval(&mut self, src: &str) -> Result<TclValue, TclError> {
        self.eval_at(src, 1)
    }

    /// Evaluate a script whose first character sits on `first_line`.
    pub fn eval_at(&mut self, src: &str, first_line: usize) -> Result<TclValue, TclError> {
        let cmds = parse_script(src, first_line).map_err(|e| {
            self.error(TclErrorKind::ScriptSyntaxError(e.message), e.line)
        })?;
        self.eval_commands(&cmds)
    }

    /// Evaluate an `expr` expression string.
    pub fn eval_expr(&mut self, text: &str, line: usize) -> Result<TclValue, TclError> {
        self.enter(line)?;
        let out = expr::eval_expr(self, text, line);
        self.depth -= 1;
        out
    }

    /// Substitute a single Tcl word given as source text (`$h`, `"a$b"`,
    /// `[expr {...}]`, `{lit}`).
    pub fn eval_word(&mut self, raw: &str, line: usize) -> Result<TclValue, TclError> {
        let cmds = parse_script(raw, line).map_err(|e| {
            self.error(TclErrorKind::ScriptSyntaxError(e.message), e.line)
        })?;
        match cmds.as_slice() {
            [cmd] if cmd.words.len() == 1 => self.subst_word(&cmd.words[0]),
            _ => Err(self.error(
                TclErrorKind::ScriptSyntaxError(format!("expected a single word, got \"{raw}\"")),
                line,
            )),
        }
    }

    pub(crate) fn error(&self, kind: TclErrorKind, line: usize) -> TclError {
        TclError {
            kind,
            line,
            file: self.source.clone(),
        }
    }

    pub(crate) fn locate(&self, mut err: TclError) -> TclError {
        if err.file.is_none() {
            err.file = self.source.clone();
        }
        err
    }

    fn enter(&mut self, line: usize) -> Result<(), TclError> {
        if self.depth >= MAX_DEPTH {
            return Err(self.error(TclErrorKind::NestingTooDeep, line));
        }
        self.depth += 1;
        Ok(())
    }

    pub(crate) fn read_var(&self, name: &str, line: usize) -> Result<TclValue, TclError> {
        self.vars
            .get(name.trim_start_matches("::"))
            .cloned()
            .ok_or_else(|| self.error(TclErrorKind::UndefinedVariable(name.to_string()), line))
    }

    pub(crate) fn subst_parts(&mut self, parts: &[Part], line: usize) -> Result<TclValue, TclError> {
        if let [Part::Text(t)] = parts {
            return Ok(TclValue::new(t.clone()));
        }
        let mut out = String::new();
        for part in parts {
            match part {
                Part::Text(t) => out.push_str(t),
                Part::Var(name) => out.push_str(self.read_var(name, line)?.as_str()),
                Part::ArrayVar(name) => {
                    return Err(self.error(
                        TclErrorKind::UnsupportedFeature(format!("array variable {name}")),
                        line,
                    ))
                }
                Part::Script(cmds) => out.push_str(self.eval_commands(cmds)?.as_str()),
            }
        }
        Ok(TclValue::new(out))
    }

    fn subst_word(&mut self, word: &Word) -> Result<TclValue, TclError> {
        match &word.body {
            WordBody::Literal(s) => Ok(TclValue::new(s.clone())),
            WordBody::Subst(parts) => self.subst_parts(parts, word.line),
        }
    }

    pub(crate) fn eval_commands(&mut self, cmds: &[Command]) -> Result<TclValue, TclError> {
        let first = cmds.first().map_or(0, |c| c.line);
        self.enter(first)?;
        let mut result = Ok(TclValue::empty());
        for cmd in cmds {
            result = self.eval_command(cmd);
            if result.is_err() {
                break;
            }
        }
        self.depth -= 1;
        result
    }

    fn eval_command(&mut self, cmd: &Command) -> Result<TclValue, TclError> {
        let mut args = Vec::with_capacity(cmd.words.len());
        for w in &cmd.words {
            args.push(Arg {
                value: self.subst_word(w)?.into_string(),
                line: w.line,
            });
        }
        let name = args[0].value.clone();
        let line = cmd.line;
        match name.as_str() {
            "set" => self.cmd_set(&args, line),
            "expr" => {
                if args.len() < 2 {
                    return Err(self.wrong_args("expr arg ?arg ...?", line));
                }
                let text = args[1..]
                    .iter()
                    .map(|a| a.value.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                self.eval_expr(&text, args[1].line)
            }
            "proc" => {
                if args.len() != 4 {
                    return Err(self.wrong_args("proc name args body", line));
                }
                self.procs.insert(
                    args[1].value.clone(),
                    ProcDef {
                        params: args[2].value.clone(),
                        body: args[3].value.clone(),
                        line,
                    },
                );
                Ok(TclValue::empty())
            }
            "if" => self.cmd_if(&args, line),
            "foreach" => self.cmd_foreach(&args, line),
            "incr" => self.cmd_incr(&args, line),
            "list" => Ok(TclValue::new(list_format(args[1..].iter().map(|a| &a.value)))),
            "llength" => {
                if args.len() != 2 {
                    return Err(self.wrong_args("llength list", line));
                }
                let items = self.list(&args[1].value, line)?;
                Ok(TclValue::new(items.len().to_string()))
            }
            "lindex" => self.cmd_lindex(&args, line),
            _ if name.starts_with(ANNOTATION_PREFIX)
                || self.procs.contains_key(&name)
                || self.opaque.contains(&name) =>
            {
                Ok(TclValue::empty())
            }
            _ => Err(self.error(TclErrorKind::UnsupportedCommand(name), line)),
        }
    }

    fn wrong_args(&self, usage: &str, line: usize) -> TclError {
        self.error(
            TclErrorKind::WrongArgs(format!("wrong # args: should be \"{usage}\"")),
            line,
        )
    }

    fn list(&self, text: &str, line: usize) -> Result<Vec<String>, TclError> {
        list_parse(text).map_err(|m| self.error(TclErrorKind::BadList(m), line))
    }

    fn check_scalar_name(&self, name: &str, line: usize) -> Result<(), TclError> {
        if name.ends_with(')') && name.contains('(') {
            return Err(self.error(
                TclErrorKind::UnsupportedFeature(format!("array variable {name}")),
                line,
            ));
        }
        Ok(())
    }

    fn cmd_set(&mut self, args: &[Arg], line: usize) -> Result<TclValue, TclError> {
        match args {
            [_, name] => {
                self.check_scalar_name(&name.value, line)?;
                self.read_var(&name.value, line)
            }
            [_, name, value] => {
                self.check_scalar_name(&name.value, line)?;
                let v = TclValue::new(value.value.clone());
                self.vars
                    .insert(name.value.trim_start_matches("::").to_string(), v.clone());
                Ok(v)
            }
            _ => Err(self.wrong_args("set varName ?newValue?", line)),
        }
    }

    fn truth(&mut self, cond: &Arg) -> Result<bool, TclError> {
        let v = self.eval_expr(&cond.value, cond.line)?;
        v.as_bool().ok_or_else(|| {
            self.error(
                TclErrorKind::NotANumber(format!("expected boolean value but got \"{v}\"")),
                cond.line,
            )
        })
    }

    fn cmd_if(&mut self, args: &[Arg], line: usize) -> Result<TclValue, TclError> {
        let usage = "if expr1 ?then? body1 elseif expr2 ?then? body2 ... ?else? ?bodyN?";
        let mut i = 1;
        loop {
            let Some(cond) = args.get(i) else {
                return Err(self.wrong_args(usage, line));
            };
            i += 1;
            if args.get(i).is_some_and(|a| a.value == "then") {
                i += 1;
            }
            let Some(body) = args.get(i) else {
                return Err(self.wrong_args(usage, line));
            };
            i += 1;
            if self.truth(cond)? {
                return self.eval_at(&body.value, body.line);
            }
            match args.get(i).map(|a| a.value.as_str()) {
                None => return Ok(TclValue::empty()),
                Some("elseif") => i += 1,
                Some(word) => {
                    if word == "else" {
                        i += 1;
                    }
                    return match &args[i..] {
                        [body] => self.eval_at(&body.value, body.line),
                        _ => Err(self.wrong_args(usage, line)),
                    };
                }
            }
        }
    }

    fn cmd_foreach(&mut self, args: &[Arg], line: usize) -> Result<TclValue, TclError> {
        if args.len() < 4 || !args.len().is_multiple_of(2) {
            return Err(self.wrong_args("foreach varList list ?varList list ...? command", line));
        }
        let body = &args[args.len() - 1];
        let mut groups = Vec::new();
        let mut rounds = 0;
        for pair in args[1..args.len() - 1].chunks(2) {
            let names = self.list(&pair[0].value, pair[0].line)?;
            if names.is_empty() {
                return Err(self.error(
                    TclErrorKind::WrongArgs("foreach varlist is empty".into()),
                    pair[0].line,
                ));
            }
            let values = self.list(&pair[1].value, pair[1].line)?;
            rounds = rounds.max(values.len().div_ceil(names.len()));
            groups.push((names, values));
        }
        for round in 0..rounds {
            for (names, values) in &groups {
                for (k, name) in names.iter().enumerate() {
                    self.check_scalar_name(name, line)?;
                    let v = values.get(round * names.len() + k).cloned().unwrap_or_default();
                    self.vars.insert(name.clone(), TclValue::new(v));
                }
            }
            self.eval_at(&body.value, body.line)?;
        }
        Ok(TclValue::empty())
    }

    fn cmd_incr(&mut self, args: &[Arg], line: usize) -> Result<TclValue, TclError> {
        let (name, amount) = match args {
            [_, name] => (name, 1),
            [_, name, by] => {
                let amount = TclValue::new(by.value.clone()).as_int().ok_or_else(|| {
                    self.error(
                        TclErrorKind::NotANumber(format!("expected integer but got \"{}\"", by.value)),
                        line,
                    )
                })?;
                (name, amount)
            }
            _ => return Err(self.wrong_args("incr varName ?increment?", line)),
        };
        self.check_scalar_name(&name.value, line)?;
        let key = name.value.trim_start_matches("::").to_string();
        let current = match self.vars.get(&key) {
            None => 0,
            Some(v) => v.as_int().ok_or_else(|| {
                self.error(
                    TclErrorKind::NotANumber(format!("expected integer but got \"{v}\"")),
                    line,
                )
            })?,
        };
        let next = current
            .checked_add(amount)
            .ok_or_else(|| self.error(TclErrorKind::NumericOverflow, line))?;
        let v = TclValue::new(next.to_string());
        self.vars.insert(key, v.clone());
        Ok(v)
    }

    fn cmd_lindex(&mut self, args: &[Arg], line: usize) -> Result<TclValue, TclError> {
        if args.len() < 2 {
            return Err(self.wrong_args("lindex list ?index ...?", line));
        }
        let indices: Vec<String> = match &args[2..] {
            [] => Vec::new(),
            [single] => self.list(&single.value, line)?,
            many => many.iter().map(|a| a.value.clone()).collect(),
        };
        let mut current = args[1].value.clone();
        for idx in indices {
            let items = self.list(&current, line)?;
            let pos = resolve_index(&idx, items.len())
                .ok_or_else(|| self.error(TclErrorKind::BadList(format!("bad index \"{idx}\"")), line))?;
            current = match pos {
                Some(p) => items[p].clone(),
                None => String::new(),
            };
        }
        Ok(TclValue::new(current))
    }
}

struct Arg {
    value: String,
    line: usize,
}

/// Resolve a Tcl list index (`3`, `end`, `end-1`, `1+2`) against a list of
/// `len` elements. Outer `None` means malformed; inner `None` out of range.
fn resolve_index(text: &str, len: usize) -> Option<Option<usize>> {
    let s = text.trim();
    let len = len as i64;
    let offset = |rest: &str| -> Option<i64> {
        if rest.is_empty() {
            return Some(0);
        }
        let (sign, digits) = rest.split_at(1);
        let n = match parse_number(digits)? {
            Number::Int(n) if !digits.starts_with(['+', '-']) => n,
            _ => return None,
        };
        match sign {
            "+" => Some(n),
            "-" => Some(-n),
            _ => None,
        }
    };
    let absolute = if let Some(rest) = s.strip_prefix("end") {
        len - 1 + offset(rest)?
    } else if let Some(Number::Int(n)) = parse_number(s) {
        n
    } else {
        let split = s[1..].find(['+', '-'])? + 1;
        let base = match parse_number(&s[..split])? {
            Number::Int(n) => n,
            Number::Float(_) => return None,
        };
        base + offset(&s[split..])?
    };
    Some((0..len).contains(&absolute).then_some(absolute as usize))
}
