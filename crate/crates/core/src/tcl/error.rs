// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::path::PathBuf;

/// Why static evaluation stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TclErrorKind {
    /// Command outside the allowlist and not declared opaque.
    UnsupportedCommand(String),
    UndefinedVariable(String),
    ExprSyntaxError(String),
    DivisionByZero,
    /// A numeric or boolean reading of a non-numeric string.
    NotANumber(String),
    /// Integer or floating-point result outside the representable range.
    NumericOverflow,
    DomainError(String),
    WrongArgs(String),
    ScriptSyntaxError(String),
    /// A value that does not parse as a Tcl list, or a bad list index.
    BadList(String),
    /// Valid Tcl that the static subset does not model (arrays, ...).
    UnsupportedFeature(String),
    NestingTooDeep,
}

impl fmt::Display for TclErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TclErrorKind::UnsupportedCommand(c) => write!(f, "UnsupportedCommand {c}"),
            TclErrorKind::UndefinedVariable(v) => write!(f, "UndefinedVariable {v}"),
            TclErrorKind::ExprSyntaxError(m) => write!(f, "ExprSyntaxError {m}"),
            TclErrorKind::DivisionByZero => f.write_str("DivisionByZero"),
            TclErrorKind::NotANumber(m) => write!(f, "NotANumber {m}"),
            TclErrorKind::NumericOverflow => f.write_str("NumericOverflow"),
            TclErrorKind::DomainError(m) => write!(f, "DomainError {m}"),
            TclErrorKind::WrongArgs(m) => write!(f, "WrongArgs {m}"),
            TclErrorKind::ScriptSyntaxError(m) => write!(f, "ScriptSyntaxError {m}"),
            TclErrorKind::BadList(m) => write!(f, "BadList {m}"),
            TclErrorKind::UnsupportedFeature(m) => write!(f, "UnsupportedFeature {m}"),
            TclErrorKind::NestingTooDeep => f.write_str("NestingTooDeep"),
        }
    }
}

/// An evaluation error with the source position it arose at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TclError {
    pub kind: TclErrorKind,
    pub line: usize,
    pub file: Option<PathBuf>,
}

impl fmt::Display for TclError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(file) => write!(f, "{}:{}: {}", file.display(), self.line, self.kind),
            None => write!(f, "line {}: {}", self.line, self.kind),
        }
    }
}

impl std::error::Error for TclError {}
