// SPDX-License-Identifier: Apache-2.0

//! The `expr` sublanguage.
//!
//! Expressions are parsed completely before evaluation; `&&`, `||` and `?:`
//! then evaluate lazily, so `0 && $undefined` is fine. Numeric literals keep
//! their source text until an operator needs a number, matching Tcl's
//! behaviour for `eq`/`ne`. Results that read as numbers are returned in
//! canonical form (`012` becomes `10`, `1.50` becomes `1.5`).

use std::cmp::Ordering;

use super::error::TclErrorKind;
use super::parse::{Command, ParseError, Parser, Part};
use super::value::{parse_bool, parse_number, Number, TclValue};
use super::{TclContext, TclError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnOp {
    Neg,
    Plus,
    Not,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Pow,
    Mul,
    Div,
    Mod,
    Add,
    Sub,
    Shl,
    Shr,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    StrEq,
    StrNe,
    BitAnd,
    BitXor,
    BitOr,
    And,
    Or,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::BitOr => 3,
            BinOp::BitXor => 4,
            BinOp::BitAnd => 5,
            BinOp::StrEq | BinOp::StrNe => 6,
            BinOp::Eq | BinOp::Ne => 7,
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => 8,
            BinOp::Shl | BinOp::Shr => 9,
            BinOp::Add | BinOp::Sub => 10,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 11,
            BinOp::Pow => 12,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Pow => "**",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::StrEq => "eq",
            BinOp::StrNe => "ne",
            BinOp::BitAnd => "&",
            BinOp::BitXor => "^",
            BinOp::BitOr => "|",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    /// Literal operand text (numbers, braced strings, boolean barewords).
    Text(String),
    Quoted(Vec<Part>, usize),
    Var(String, usize),
    ArrayVar(String, usize),
    Script(Vec<Command>),
    Unary(UnOp, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Ternary(Box<Node>, Box<Node>, Box<Node>),
    Call(String, Vec<Node>, usize),
}

#[derive(Debug, Clone)]
enum Val {
    Num(Number),
    Str(String),
}

impl Val {
    fn text(&self) -> String {
        match self {
            Val::Num(n) => n.render(),
            Val::Str(s) => s.clone(),
        }
    }

    fn number(&self) -> Option<Number> {
        match self {
            Val::Num(n) => Some(*n),
            Val::Str(s) => parse_number(s),
        }
    }
}

struct ExprParser<'a> {
    cur: Parser<'a>,
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        message: msg.into(),
        line,
    }
}

impl<'a> ExprParser<'a> {
    fn skip_space(&mut self) {
        while let Some(b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c') = self.cur.peek() {
            self.cur.advance(1);
        }
    }

    fn starts_with(&self, s: &str) -> bool {
        self.cur.src[self.cur.pos..].starts_with(s)
    }

    fn word_op(&self, op: &str) -> bool {
        self.starts_with(op)
            && !self
                .cur
                .peek_at(op.len())
                .is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_')
    }

    fn peek_binop(&mut self) -> Option<(BinOp, usize)> {
        self.skip_space();
        let table: &[(&str, BinOp)] = &[
            ("**", BinOp::Pow),
            ("<<", BinOp::Shl),
            (">>", BinOp::Shr),
            ("<=", BinOp::Le),
            (">=", BinOp::Ge),
            ("==", BinOp::Eq),
            ("!=", BinOp::Ne),
            ("&&", BinOp::And),
            ("||", BinOp::Or),
            ("*", BinOp::Mul),
            ("/", BinOp::Div),
            ("%", BinOp::Mod),
            ("+", BinOp::Add),
            ("-", BinOp::Sub),
            ("<", BinOp::Lt),
            (">", BinOp::Gt),
            ("&", BinOp::BitAnd),
            ("^", BinOp::BitXor),
            ("|", BinOp::BitOr),
        ];
        for (sym, op) in table {
            if self.starts_with(sym) {
                return Some((*op, sym.len()));
            }
        }
        if self.word_op("eq") {
            return Some((BinOp::StrEq, 2));
        }
        if self.word_op("ne") {
            return Some((BinOp::StrNe, 2));
        }
        None
    }

    fn ternary(&mut self) -> Result<Node, ParseError> {
        let cond = self.binary(1)?;
        self.skip_space();
        if self.cur.peek() != Some(b'?') {
            return Ok(cond);
        }
        self.cur.advance(1);
        let yes = self.ternary()?;
        self.skip_space();
        if self.cur.peek() != Some(b':') {
            return Err(syntax(self.cur.line, "missing \":\" in ternary"));
        }
        self.cur.advance(1);
        let no = self.ternary()?;
        Ok(Node::Ternary(Box::new(cond), Box::new(yes), Box::new(no)))
    }

    fn binary(&mut self, min_prec: u8) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some((op, len)) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.cur.advance(len);
            let next = if op == BinOp::Pow { prec } else { prec + 1 };
            let rhs = self.binary(next)?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        self.skip_space();
        let op = match self.cur.peek() {
            Some(b'-') => UnOp::Neg,
            Some(b'+') => UnOp::Plus,
            Some(b'!') if self.cur.peek_at(1) != Some(b'=') => UnOp::Not,
            Some(b'~') => UnOp::BitNot,
            _ => return self.primary(),
        };
        self.cur.advance(1);
        Ok(Node::Unary(op, Box::new(self.unary()?)))
    }

    fn number_literal(&mut self) -> Result<Node, ParseError> {
        let start = self.cur.pos;
        let bytes = self.cur.src.as_bytes();
        let hexish = self.starts_with("0x") || self.starts_with("0X");
        let mut i = self.cur.pos;
        while i < bytes.len() {
            let b = bytes[i];
            let exp_sign = (b == b'+' || b == b'-')
                && !hexish
                && i > start
                && matches!(bytes[i - 1], b'e' | b'E');
            if b.is_ascii_alphanumeric() || b == b'.' || exp_sign {
                i += 1;
            } else {
                break;
            }
        }
        let text = &self.cur.src[start..i];
        if parse_number(text).is_none() {
            return Err(syntax(self.cur.line, format!("invalid number \"{text}\"")));
        }
        self.cur.advance(i - start);
        Ok(Node::Text(text.to_string()))
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        self.skip_space();
        let line = self.cur.line;
        match self.cur.peek() {
            None => Err(syntax(line, "missing operand")),
            Some(b'(') => {
                self.cur.advance(1);
                let inner = self.ternary()?;
                self.skip_space();
                if self.cur.peek() != Some(b')') {
                    return Err(syntax(self.cur.line, "missing close parenthesis"));
                }
                self.cur.advance(1);
                Ok(inner)
            }
            Some(b'$') => match self.cur.variable()? {
                Some(Part::Var(name)) => Ok(Node::Var(name, line)),
                Some(Part::ArrayVar(name)) => Ok(Node::ArrayVar(name, line)),
                _ => Err(syntax(line, "invalid character \"$\"")),
            },
            Some(b'[') => {
                self.cur.advance(1);
                Ok(Node::Script(self.cur.commands(true)?))
            }
            Some(b'"') => {
                self.cur.advance(1);
                let parts = self.cur.parts(true, false)?;
                self.cur.advance(1);
                Ok(Node::Quoted(parts, line))
            }
            Some(b'{') => Ok(Node::Text(self.cur.braced()?)),
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number_literal(),
            Some(b) if b.is_ascii_alphabetic() => {
                let start = self.cur.pos;
                while let Some(b) = self.cur.peek() {
                    if b.is_ascii_alphanumeric() || b == b'_' || b == b':' {
                        self.cur.advance(1);
                    } else {
                        break;
                    }
                }
                let ident = self.cur.src[start..self.cur.pos].to_string();
                self.skip_space();
                if self.cur.peek() == Some(b'(') {
                    self.cur.advance(1);
                    let mut args = Vec::new();
                    self.skip_space();
                    if self.cur.peek() == Some(b')') {
                        self.cur.advance(1);
                    } else {
                        loop {
                            args.push(self.ternary()?);
                            self.skip_space();
                            match self.cur.peek() {
                                Some(b',') => self.cur.advance(1),
                                Some(b')') => {
                                    self.cur.advance(1);
                                    break;
                                }
                                _ => return Err(syntax(self.cur.line, "missing close parenthesis")),
                            }
                        }
                    }
                    return Ok(Node::Call(ident, args, line));
                }
                let lower = ident.to_ascii_lowercase();
                if matches!(
                    lower.as_str(),
                    "true" | "false" | "yes" | "no" | "on" | "off" | "inf" | "nan"
                ) {
                    Ok(Node::Text(ident))
                } else {
                    Err(syntax(line, format!("invalid bareword \"{ident}\"")))
                }
            }
            Some(_) => {
                let ch = self.cur.src[self.cur.pos..].chars().next().unwrap();
                Err(syntax(line, format!("invalid character \"{ch}\"")))
            }
        }
    }
}

fn to_expr_error(e: ParseError) -> TclError {
    TclError {
        kind: TclErrorKind::ExprSyntaxError(e.message),
        line: e.line,
        file: None,
    }
}

/// Evaluate an expression string. `line` is the line its first character
/// sits on.
pub(crate) fn eval_expr(ctx: &mut TclContext, text: &str, line: usize) -> Result<TclValue, TclError> {
    let mut p = ExprParser {
        cur: Parser::new(text, line),
    };
    let node = p.ternary().map_err(|e| ctx.locate(to_expr_error(e)))?;
    p.skip_space();
    if !p.cur.eof() {
        let rest: String = text[p.cur.pos..].chars().take(12).collect();
        return Err(ctx.error(
            TclErrorKind::ExprSyntaxError(format!("unexpected \"{rest}\"")),
            p.cur.line,
        ));
    }
    let val = Evaluator { ctx, line }.eval(&node)?;
    Ok(TclValue::new(match val {
        Val::Num(n) => n.render(),
        Val::Str(s) => match parse_number(&s) {
            Some(n) => n.render(),
            None => s,
        },
    }))
}

struct Evaluator<'c> {
    ctx: &'c mut TclContext,
    line: usize,
}

impl Evaluator<'_> {
    fn err(&self, kind: TclErrorKind) -> TclError {
        self.ctx.error(kind, self.line)
    }

    fn eval(&mut self, node: &Node) -> Result<Val, TclError> {
        match node {
            Node::Text(t) => Ok(Val::Str(t.clone())),
            Node::Quoted(parts, line) => Ok(Val::Str(self.ctx.subst_parts(parts, *line)?.into_string())),
            Node::Var(name, line) => Ok(Val::Str(self.ctx.read_var(name, *line)?.into_string())),
            Node::ArrayVar(name, line) => Err(self.ctx.error(
                TclErrorKind::UnsupportedFeature(format!("array variable {name}")),
                *line,
            )),
            Node::Script(cmds) => Ok(Val::Str(self.ctx.eval_commands(cmds)?.into_string())),
            Node::Unary(op, inner) => {
                let v = self.eval(inner)?;
                self.unary(*op, v)
            }
            Node::Binary(BinOp::And, a, b) => {
                let lhs = self.eval(a)?;
                if !self.truth(&lhs, "&&")? {
                    return Ok(Val::Num(Number::Int(0)));
                }
                let rhs = self.eval(b)?;
                Ok(Val::Num(Number::Int(self.truth(&rhs, "&&")? as i64)))
            }
            Node::Binary(BinOp::Or, a, b) => {
                let lhs = self.eval(a)?;
                if self.truth(&lhs, "||")? {
                    return Ok(Val::Num(Number::Int(1)));
                }
                let rhs = self.eval(b)?;
                Ok(Val::Num(Number::Int(self.truth(&rhs, "||")? as i64)))
            }
            Node::Binary(op, a, b) => {
                let lhs = self.eval(a)?;
                let rhs = self.eval(b)?;
                self.binary(*op, lhs, rhs)
            }
            Node::Ternary(c, yes, no) => {
                let cond = self.eval(c)?;
                if self.truth(&cond, "?")? {
                    self.eval(yes)
                } else {
                    self.eval(no)
                }
            }
            Node::Call(name, args, line) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a)?);
                }
                self.call(name, vals)
                    .map_err(|kind| self.ctx.error(kind, *line))
            }
        }
    }

    fn truth(&self, v: &Val, op: &str) -> Result<bool, TclError> {
        match v {
            Val::Num(Number::Int(i)) => Ok(*i != 0),
            Val::Num(Number::Float(f)) => Ok(*f != 0.0),
            Val::Str(s) => parse_bool(s).ok_or_else(|| {
                self.err(TclErrorKind::NotANumber(format!(
                    "expected boolean value but got \"{s}\" (operator {op})"
                )))
            }),
        }
    }

    fn num(&self, v: &Val, op: &str) -> Result<Number, TclError> {
        v.number().ok_or_else(|| {
            self.err(TclErrorKind::NotANumber(format!(
                "can't use non-numeric string \"{}\" as operand of \"{op}\"",
                v.text()
            )))
        })
    }

    fn int(&self, v: &Val, op: &str) -> Result<i64, TclError> {
        match self.num(v, op)? {
            Number::Int(i) => Ok(i),
            Number::Float(_) => Err(self.err(TclErrorKind::NotANumber(format!(
                "can't use floating-point value as operand of \"{op}\""
            )))),
        }
    }

    fn checked_float(&self, f: f64) -> Result<Val, TclError> {
        if f.is_finite() {
            Ok(Val::Num(Number::Float(f)))
        } else {
            Err(self.err(TclErrorKind::NumericOverflow))
        }
    }

    fn int_result(&self, v: Option<i64>) -> Result<Val, TclError> {
        v.map(|i| Val::Num(Number::Int(i)))
            .ok_or_else(|| self.err(TclErrorKind::NumericOverflow))
    }

    fn unary(&self, op: UnOp, v: Val) -> Result<Val, TclError> {
        match op {
            UnOp::Neg => match self.num(&v, "-")? {
                Number::Int(i) => self.int_result(i.checked_neg()),
                Number::Float(f) => Ok(Val::Num(Number::Float(-f))),
            },
            UnOp::Plus => Ok(Val::Num(self.num(&v, "+")?)),
            UnOp::Not => Ok(Val::Num(Number::Int(!self.truth(&v, "!")? as i64))),
            UnOp::BitNot => Ok(Val::Num(Number::Int(!self.int(&v, "~")?))),
        }
    }

    fn binary(&self, op: BinOp, a: Val, b: Val) -> Result<Val, TclError> {
        let sym = op.symbol();
        let bool_val = |b: bool| Ok(Val::Num(Number::Int(b as i64)));
        match op {
            BinOp::StrEq => bool_val(a.text() == b.text()),
            BinOp::StrNe => bool_val(a.text() != b.text()),
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq | BinOp::Ne => {
                let ord = match (a.number(), b.number()) {
                    (Some(x), Some(y)) => compare_numbers(x, y),
                    _ => Some(a.text().cmp(&b.text())),
                };
                let Some(ord) = ord else {
                    // NaN compares unequal to everything.
                    return bool_val(op == BinOp::Ne);
                };
                bool_val(match op {
                    BinOp::Lt => ord == Ordering::Less,
                    BinOp::Gt => ord == Ordering::Greater,
                    BinOp::Le => ord != Ordering::Greater,
                    BinOp::Ge => ord != Ordering::Less,
                    BinOp::Eq => ord == Ordering::Equal,
                    _ => ord != Ordering::Equal,
                })
            }
            BinOp::Mod => {
                let x = self.int(&a, sym)?;
                let y = self.int(&b, sym)?;
                if y == 0 {
                    return Err(self.err(TclErrorKind::DivisionByZero));
                }
                let r = x.checked_rem(y);
                self.int_result(r.map(|r| if r != 0 && ((r < 0) != (y < 0)) { r + y } else { r }))
            }
            BinOp::Shl | BinOp::Shr | BinOp::BitAnd | BinOp::BitOr | BinOp::BitXor => {
                let x = self.int(&a, sym)?;
                let y = self.int(&b, sym)?;
                match op {
                    BinOp::BitAnd => self.int_result(Some(x & y)),
                    BinOp::BitOr => self.int_result(Some(x | y)),
                    BinOp::BitXor => self.int_result(Some(x ^ y)),
                    _ if y < 0 => Err(self.err(TclErrorKind::DomainError("negative shift argument".into()))),
                    BinOp::Shl => {
                        let wide = if y >= 64 { None } else { (x as i128).checked_shl(y as u32) };
                        self.int_result(wide.and_then(|w| i64::try_from(w).ok()))
                    }
                    _ => self.int_result(Some(if y >= 64 { if x < 0 { -1 } else { 0 } } else { x >> y })),
                }
            }
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Pow => {
                let x = self.num(&a, sym)?;
                let y = self.num(&b, sym)?;
                match (x, y) {
                    (Number::Int(x), Number::Int(y)) => match op {
                        BinOp::Add => self.int_result(x.checked_add(y)),
                        BinOp::Sub => self.int_result(x.checked_sub(y)),
                        BinOp::Mul => self.int_result(x.checked_mul(y)),
                        BinOp::Div => {
                            if y == 0 {
                                return Err(self.err(TclErrorKind::DivisionByZero));
                            }
                            let q = x.checked_div(y);
                            self.int_result(q.map(|q| if (x % y != 0) && ((x < 0) != (y < 0)) { q - 1 } else { q }))
                        }
                        _ => self.int_pow(x, y),
                    },
                    (x, y) => {
                        let (x, y) = (x.as_f64(), y.as_f64());
                        match op {
                            BinOp::Add => self.checked_float(x + y),
                            BinOp::Sub => self.checked_float(x - y),
                            BinOp::Mul => self.checked_float(x * y),
                            BinOp::Div => {
                                if y == 0.0 {
                                    return Err(self.err(TclErrorKind::DivisionByZero));
                                }
                                self.checked_float(x / y)
                            }
                            _ => self.checked_float(x.powf(y)),
                        }
                    }
                }
            }
            BinOp::And | BinOp::Or => unreachable!("short-circuit operators handled in eval"),
        }
    }

    fn int_pow(&self, base: i64, exp: i64) -> Result<Val, TclError> {
        if exp < 0 {
            return match base {
                0 => Err(self.err(TclErrorKind::DomainError(
                    "exponentiation of zero by negative power".into(),
                ))),
                1 => self.int_result(Some(1)),
                -1 => self.int_result(Some(if exp % 2 == 0 { 1 } else { -1 })),
                _ => self.int_result(Some(0)),
            };
        }
        let result = u32::try_from(exp).ok().and_then(|e| base.checked_pow(e));
        match (result, base) {
            (Some(v), _) => self.int_result(Some(v)),
            (None, 0 | 1) => self.int_result(Some(base)),
            (None, -1) => self.int_result(Some(if exp % 2 == 0 { 1 } else { -1 })),
            (None, _) => Err(self.err(TclErrorKind::NumericOverflow)),
        }
    }

    fn call(&self, name: &str, args: Vec<Val>) -> Result<Val, TclErrorKind> {
        let arity = |n: usize| -> Result<(), TclErrorKind> {
            if args.len() == n {
                Ok(())
            } else {
                Err(TclErrorKind::WrongArgs(format!(
                    "{name}() takes {n} argument(s), got {}",
                    args.len()
                )))
            }
        };
        let number = |v: &Val| -> Result<Number, TclErrorKind> {
            v.number().ok_or_else(|| {
                TclErrorKind::NotANumber(format!("expected number but got \"{}\"", v.text()))
            })
        };
        let float = |f: f64| -> Result<Val, TclErrorKind> {
            if f.is_finite() {
                Ok(Val::Num(Number::Float(f)))
            } else {
                Err(TclErrorKind::NumericOverflow)
            }
        };
        let to_int = |f: f64| -> Result<Val, TclErrorKind> {
            if f.is_finite() && f >= i64::MIN as f64 && f < i64::MAX as f64 {
                Ok(Val::Num(Number::Int(f as i64)))
            } else {
                Err(TclErrorKind::NumericOverflow)
            }
        };
        match name {
            "abs" => {
                arity(1)?;
                match number(&args[0])? {
                    Number::Int(i) => i
                        .checked_abs()
                        .map(|i| Val::Num(Number::Int(i)))
                        .ok_or(TclErrorKind::NumericOverflow),
                    Number::Float(f) => float(f.abs()),
                }
            }
            "min" | "max" => {
                if args.is_empty() {
                    return Err(TclErrorKind::WrongArgs(format!("{name}() needs at least one argument")));
                }
                let mut best = number(&args[0])?;
                for v in &args[1..] {
                    let n = number(v)?;
                    let ord = compare_numbers(n, best);
                    let better = match name {
                        "min" => ord == Some(Ordering::Less),
                        _ => ord == Some(Ordering::Greater),
                    };
                    if better {
                        best = n;
                    }
                }
                Ok(Val::Num(best))
            }
            "floor" => {
                arity(1)?;
                float(number(&args[0])?.as_f64().floor())
            }
            "ceil" => {
                arity(1)?;
                float(number(&args[0])?.as_f64().ceil())
            }
            "fmod" => {
                arity(2)?;
                let x = number(&args[0])?.as_f64();
                let y = number(&args[1])?.as_f64();
                if y == 0.0 {
                    return Err(TclErrorKind::DomainError("argument not in valid range".into()));
                }
                float(x % y)
            }
            "double" => {
                arity(1)?;
                float(number(&args[0])?.as_f64())
            }
            "int" => {
                arity(1)?;
                match number(&args[0])? {
                    Number::Int(i) => Ok(Val::Num(Number::Int(i))),
                    Number::Float(f) => to_int(f.trunc()),
                }
            }
            "round" => {
                arity(1)?;
                match number(&args[0])? {
                    Number::Int(i) => Ok(Val::Num(Number::Int(i))),
                    Number::Float(f) => to_int(f.round()),
                }
            }
            "sqrt" => {
                arity(1)?;
                let x = number(&args[0])?.as_f64();
                if x < 0.0 {
                    return Err(TclErrorKind::DomainError("argument not in valid range".into()));
                }
                float(x.sqrt())
            }
            "pow" => {
                arity(2)?;
                float(number(&args[0])?.as_f64().powf(number(&args[1])?.as_f64()))
            }
            other => Err(TclErrorKind::ExprSyntaxError(format!(
                "unknown math function \"{other}\""
            ))),
        }
    }
}

fn compare_numbers(a: Number, b: Number) -> Option<Ordering> {
    match (a, b) {
        (Number::Int(x), Number::Int(y)) => Some(x.cmp(&y)),
        (x, y) => x.as_f64().partial_cmp(&y.as_f64()),
    }
}
