// SPDX-License-Identifier: Apache-2.0

//! Pre- and postcondition expressions evaluated against a step's build
//! directory.
//!
//! ```text
//! exists("outputs/design.v") and not contains("logs/run.log", "ERROR")
//! metric("reports/timing.rpt", "slack\s*=\s*(-?[0-9.]+)") >= 0
//! shell("grep -q done logs/run.log")
//! ```
//!
//! Operators, loosest first: `or`/`||`, `and`/`&&`, `not`/`!`, then one
//! comparison (`== != < <= > >=`). Literals are numbers, quoted strings and
//! `true`/`false`. Primitive arguments must be string literals; paths are
//! relative to the step directory and may not climb out of it. Regexes are
//! compiled when the expression is parsed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::graph::FlowGraph;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckSyntaxError {
    #[error("column {column}: CheckSyntaxError: {message}")]
    Syntax { column: usize, message: String },
    #[error("column {column}: BadRegex: {message}")]
    BadRegex { column: usize, message: String },
}

impl CheckSyntaxError {
    pub fn column(&self) -> usize {
        match self {
            CheckSyntaxError::Syntax { column, .. } | CheckSyntaxError::BadRegex { column, .. } => *column,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Post,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckVerdict {
    Pass,
    Fail,
    Error,
}

impl fmt::Display for CheckVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckVerdict::Pass => "PASS",
            CheckVerdict::Fail => "FAIL",
            CheckVerdict::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub step: String,
    pub phase: Phase,
    pub expr: String,
    pub verdict: CheckVerdict,
    pub message: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}: {}", self.verdict, self.step, self.phase, self.expr)?;
        if !self.message.is_empty() {
            write!(f, " ({})", self.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone)]
enum Expr {
    Bool(bool),
    Num(f64),
    Str(String),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Exists(PathBuf),
    Contains(PathBuf, Regex),
    Metric(PathBuf, Regex),
    Shell(String),
}

/// A parsed check expression.
#[derive(Debug, Clone)]
pub struct CheckExpr {
    source: String,
    root: Expr,
}

impl CheckExpr {
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Whether evaluation may run a shell command.
    pub fn uses_shell(&self) -> bool {
        fn walk(e: &Expr) -> bool {
            match e {
                Expr::Shell(_) => true,
                Expr::Not(a) => walk(a),
                Expr::And(a, b) | Expr::Or(a, b) | Expr::Cmp(_, a, b) => walk(a) || walk(b),
                _ => false,
            }
        }
        walk(&self.root)
    }
}

impl fmt::Display for CheckExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Minus,
    Not,
    And,
    Or,
    Cmp(CmpOp),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, CheckSyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |column: usize, message: String| CheckSyntaxError::Syntax { column, message };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, len) = match (c, two.as_str()) {
            (_, "&&") => (Tok::And, 2),
            (_, "||") => (Tok::Or, 2),
            (_, "==") => (Tok::Cmp(CmpOp::Eq), 2),
            (_, "!=") => (Tok::Cmp(CmpOp::Ne), 2),
            (_, "<=") => (Tok::Cmp(CmpOp::Le), 2),
            (_, ">=") => (Tok::Cmp(CmpOp::Ge), 2),
            ('<', _) => (Tok::Cmp(CmpOp::Lt), 1),
            ('>', _) => (Tok::Cmp(CmpOp::Gt), 1),
            ('!', _) => (Tok::Not, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            ('"' | '\'', _) => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None => return Err(err(col, "unterminated string".into())),
                        Some(&q) if q == c => break,
                        Some('\\') => {
                            let e = chars.get(j + 1).ok_or_else(|| err(col, "unterminated string".into()))?;
                            match e {
                                'n' => s.push('\n'),
                                't' => s.push('\t'),
                                '"' | '\'' | '\\' => s.push(*e),
                                // Other escapes are kept so regexes read naturally.
                                other => {
                                    s.push('\\');
                                    s.push(*other);
                                }
                            }
                            j += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                (Tok::Str(s), j + 1 - i)
            }
            _ if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '.') {
                    j += 1;
                }
                // Exponent sign.
                while j < chars.len()
                    && matches!(chars[j], '+' | '-')
                    && matches!(chars[j - 1], 'e' | 'E')
                {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let n: f64 = text.parse().map_err(|_| err(col, format!("bad number `{text}`")))?;
                (Tok::Num(n), j - i)
            }
            ('-', _) => (Tok::Minus, 1),
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let tok = match word.as_str() {
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => Tok::Ident(word),
                };
                (tok, j - i)
            }
            _ => return Err(err(col, format!("unexpected character `{c}`"))),
        };
        out.push((tok, col));
        i += len;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, c)| *c)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, CheckSyntaxError> {
        Err(CheckSyntaxError::Syntax {
            column: self.col(),
            message: message.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), CheckSyntaxError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn or(&mut self) -> Result<Expr, CheckSyntaxError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, CheckSyntaxError> {
        let mut lhs = self.not()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Expr::And(Box::new(lhs), Box::new(self.not()?));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, CheckSyntaxError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, CheckSyntaxError> {
        let lhs = self.atom()?;
        if let Some(Tok::Cmp(op)) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.atom()?;
            if matches!(self.peek(), Some(Tok::Cmp(_))) {
                return self.err("comparisons do not chain");
            }
            return Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, CheckSyntaxError> {
        let col = self.col();
        match self.next() {
            Some(Tok::Num(n)) => Ok(Expr::Num(n)),
            Some(Tok::Minus) => match self.next() {
                Some(Tok::Num(n)) => Ok(Expr::Num(-n)),
                _ => {
                    self.pos -= 1;
                    self.err("expected a number after `-`")
                }
            },
            Some(Tok::Str(s)) => Ok(Expr::Str(s)),
            Some(Tok::LParen) => {
                let e = self.or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(w)) if w == "true" => Ok(Expr::Bool(true)),
            Some(Tok::Ident(w)) if w == "false" => Ok(Expr::Bool(false)),
            Some(Tok::Ident(w)) => self.call(&w, col),
            Some(_) => {
                self.pos -= 1;
                self.err("expected a value")
            }
            None => self.err("unexpected end of expression"),
        }
    }

    fn call(&mut self, name: &str, col: usize) -> Result<Expr, CheckSyntaxError> {
        let arity = match name {
            "exists" | "shell" => 1,
            "contains" | "metric" => 2,
            _ => {
                return Err(CheckSyntaxError::Syntax {
                    column: col,
                    message: format!("unknown function `{name}`"),
                })
            }
        };
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        loop {
            let c = self.col();
            match self.next() {
                Some(Tok::Str(s)) => args.push((s, c)),
                _ => {
                    self.pos -= 1;
                    return self.err(format!("`{name}` takes string literal arguments"));
                }
            }
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => break,
                _ => {
                    self.pos -= 1;
                    return self.err("expected `,` or `)`");
                }
            }
        }
        if args.len() != arity {
            return Err(CheckSyntaxError::Syntax {
                column: col,
                message: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
            });
        }
        if name == "shell" {
            return Ok(Expr::Shell(args.remove(0).0));
        }
        let path = relative_path(&args[0].0, args[0].1)?;
        if name == "exists" {
            return Ok(Expr::Exists(path));
        }
        let (pattern, pcol) = &args[1];
        let re = Regex::new(pattern).map_err(|e| CheckSyntaxError::BadRegex {
            column: *pcol,
            message: e.to_string(),
        })?;
        if name == "metric" {
            if re.captures_len() < 2 {
                return Err(CheckSyntaxError::BadRegex {
                    column: *pcol,
                    message: "metric pattern needs a capture group".into(),
                });
            }
            return Ok(Expr::Metric(path, re));
        }
        Ok(Expr::Contains(path, re))
    }
}

fn relative_path(text: &str, column: usize) -> Result<PathBuf, CheckSyntaxError> {
    let p = PathBuf::from(text);
    let mut depth: i64 = 0;
    for comp in p.components() {
        match comp {
            Component::Normal(_) => depth += 1,
            Component::CurDir => {}
            Component::ParentDir => depth -= 1,
            Component::RootDir | Component::Prefix(_) => {
                return Err(CheckSyntaxError::Syntax {
                    column,
                    message: format!("path `{text}` must be relative to the step directory"),
                })
            }
        }
        if depth < 0 {
            return Err(CheckSyntaxError::Syntax {
                column,
                message: format!("path `{text}` leaves the step directory"),
            });
        }
    }
    if text.is_empty() {
        return Err(CheckSyntaxError::Syntax {
            column,
            message: "empty path".into(),
        });
    }
    Ok(p)
}

/// Parse a check expression.
pub fn parse_check(src: &str) -> Result<CheckExpr, CheckSyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.chars().count() + 1,
    };
    let root = p.or()?;
    if p.pos < p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(CheckExpr {
        source: src.to_string(),
        root,
    })
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// `shell(...)` is refused when false.
    pub allow_shell: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { allow_shell: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Bool(bool),
    Num(f64),
    Str(String),
}

impl Val {
    fn type_name(&self) -> &'static str {
        match self {
            Val::Bool(_) => "boolean",
            Val::Num(_) => "number",
            Val::Str(_) => "string",
        }
    }
}

struct Evaluator<'a> {
    workspace: &'a Path,
    opts: EvalOptions,
}

impl Evaluator<'_> {
    fn read(&self, rel: &Path) -> Result<String, String> {
        let full = self.workspace.join(rel);
        fs::read(&full)
            .map(|b| String::from_utf8_lossy(&b).into_owned())
            .map_err(|e| format!("cannot read {}: {e}", rel.display()))
    }

    fn truth(&self, e: &Expr) -> Result<bool, String> {
        match self.eval(e)? {
            Val::Bool(b) => Ok(b),
            other => Err(format!("expected a boolean, got a {}", other.type_name())),
        }
    }

    fn eval(&self, e: &Expr) -> Result<Val, String> {
        Ok(match e {
            Expr::Bool(b) => Val::Bool(*b),
            Expr::Num(n) => Val::Num(*n),
            Expr::Str(s) => Val::Str(s.clone()),
            Expr::Not(a) => Val::Bool(!self.truth(a)?),
            Expr::And(a, b) => Val::Bool(self.truth(a)? && self.truth(b)?),
            Expr::Or(a, b) => Val::Bool(self.truth(a)? || self.truth(b)?),
            Expr::Cmp(op, a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                let ord = match (&a, &b) {
                    (Val::Num(x), Val::Num(y)) => x.partial_cmp(y),
                    (Val::Str(x), Val::Str(y)) => Some(x.cmp(y)),
                    (Val::Bool(x), Val::Bool(y)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => Some(x.cmp(y)),
                    _ => {
                        return Err(format!(
                            "cannot compare a {} with a {}",
                            a.type_name(),
                            b.type_name()
                        ))
                    }
                };
                let Some(ord) = ord else {
                    return Ok(Val::Bool(*op == CmpOp::Ne));
                };
                use std::cmp::Ordering::*;
                Val::Bool(match op {
                    CmpOp::Eq => ord == Equal,
                    CmpOp::Ne => ord != Equal,
                    CmpOp::Lt => ord == Less,
                    CmpOp::Le => ord != Greater,
                    CmpOp::Gt => ord == Greater,
                    CmpOp::Ge => ord != Less,
                })
            }
            Expr::Exists(p) => Val::Bool(self.workspace.join(p).exists()),
            Expr::Contains(p, re) => Val::Bool(re.is_match(&self.read(p)?)),
            Expr::Metric(p, re) => {
                let text = self.read(p)?;
                let caps = re
                    .captures(&text)
                    .ok_or_else(|| format!("no match for `{}` in {}", re.as_str(), p.display()))?;
                let raw = caps.get(1).map_or("", |m| m.as_str()).trim();
                Val::Num(
                    raw.parse()
                        .map_err(|_| format!("captured `{raw}` is not a number"))?,
                )
            }
            Expr::Shell(cmd) => {
                if !self.opts.allow_shell {
                    return Err("shell() is disabled in strict mode".into());
                }
                let status = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .current_dir(self.workspace)
                    .stdin(Stdio::null())
                    .stdout(Stdio::null())
                    .stderr(Stdio::null())
                    .status()
                    .map_err(|e| format!("cannot run sh: {e}"))?;
                Val::Bool(status.success())
            }
        })
    }
}

/// Evaluate `expr` with `workspace` as the step directory.
pub fn eval_check(expr: &CheckExpr, workspace: &Path, step: &str, phase: Phase, opts: EvalOptions) -> CheckResult {
    let ev = Evaluator { workspace, opts };
    let (verdict, message) = match ev.truth(&expr.root) {
        Ok(true) => (CheckVerdict::Pass, String::new()),
        Ok(false) => (CheckVerdict::Fail, String::new()),
        Err(m) => (CheckVerdict::Error, m),
    };
    CheckResult {
        step: step.to_string(),
        phase,
        expr: expr.source.clone(),
        verdict,
        message,
    }
}

/// Parsed conditions of one node.
#[derive(Debug, Clone, Default)]
pub struct StepChecks {
    pub pre: Vec<CheckExpr>,
    pub post: Vec<CheckExpr>,
}

/// One unparseable condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionError {
    pub node: String,
    pub phase: Phase,
    pub index: usize,
    pub source: String,
    pub error: CheckSyntaxError,
}

impl fmt::Display for ConditionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}condition #{} `{}`: {}",
            self.node, self.phase, self.index, self.source, self.error
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} malformed condition(s):\n{}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct InstrumentError(pub Vec<ConditionError>);

/// Parse every node's conditions: its own first, then graph-level ones.
/// All syntax errors are collected.
pub fn instrument_graph(g: &FlowGraph) -> Result<BTreeMap<String, StepChecks>, InstrumentError> {
    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for (name, inst) in g.nodes() {
        let cfg = inst.effective_config();
        let mut checks = StepChecks::default();
        for (phase, conds, dst) in [
            (Phase::Pre, &cfg.preconditions, &mut checks.pre),
            (Phase::Post, &cfg.postconditions, &mut checks.post),
        ] {
            for (index, src) in conds.iter().enumerate() {
                match parse_check(src) {
                    Ok(e) => dst.push(e),
                    Err(error) => errors.push(ConditionError {
                        node: name.clone(),
                        phase,
                        index,
                        source: src.clone(),
                        error,
                    }),
                }
            }
        }
        out.insert(name.clone(), checks);
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(InstrumentError(errors))
    }
}
