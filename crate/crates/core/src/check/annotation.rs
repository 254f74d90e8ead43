// SPDX-License-Identifier: Apache-2.0

//! Lexical extraction of annotation calls from Tcl text.
//!
//! Three forms are recognised, each in command style or parenthesized
//! style:
//!
//! ```tcl
//! mflowgen.enum.stdcell INV_X1
//! mflowgen.enum.stdcell(INV_X1)
//! mflowgen.equality.tile_height $h
//! mflowgen.assert {$aon_x % $switch_pitch == 0}
//! ```
//!
//! Extraction never evaluates anything. Annotations nested in braced
//! bodies (`if`, `proc`, `foreach`) and in command substitutions are found
//! too. When the file as a whole does not parse, lines that start with an
//! annotation are still scanned one by one.

use std::fmt;
use std::path::PathBuf;

use crate::tcl::{parse_script, Command, Part, TclContext, TclError, TclValue, WordBody, ANNOTATION_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnnotationKind {
    Enum,
    Equality,
    Assert,
}

impl fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationKind::Enum => "enum",
            AnnotationKind::Equality => "equality",
            AnnotationKind::Assert => "assert",
        })
    }
}

/// Source position of a check subject.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Location {
    pub node: String,
    pub file: PathBuf,
    pub line: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}:{}", self.node, self.file.display(), self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub kind: AnnotationKind,
    /// Enum category or equality group name; empty for asserts.
    pub name: String,
    /// The argument exactly as written (`INV_X1`, `$h`, `{$a == 1}`).
    pub argument: String,
    pub location: Location,
}

/// An annotation call with the wrong number of arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedAnnotation {
    pub command: String,
    pub message: String,
    pub location: Location,
}

impl fmt::Display for MalformedAnnotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: malformed annotation `{}`: {}", self.location, self.command, self.message)
    }
}

impl std::error::Error for MalformedAnnotation {}

/// Everything found in one file.
#[derive(Debug, Clone, Default)]
pub struct AnnotationScan {
    pub annotations: Vec<Annotation>,
    pub malformed: Vec<MalformedAnnotation>,
}

/// Extract annotations, failing on the first malformed one.
pub fn extract_annotations(src: &str, node: &str, file: impl Into<PathBuf>) -> Result<Vec<Annotation>, MalformedAnnotation> {
    let scan = scan_annotations(src, 1, node, file);
    match scan.malformed.into_iter().next() {
        Some(err) => Err(err),
        None => Ok(scan.annotations),
    }
}

/// Extract annotations and malformed calls from `src`, whose first line is
/// `first_line`. Results are ordered by line.
pub fn scan_annotations(src: &str, first_line: usize, node: &str, file: impl Into<PathBuf>) -> AnnotationScan {
    let mut scanner = Scanner {
        node: node.to_string(),
        file: file.into(),
        out: AnnotationScan::default(),
    };
    match parse_script(src, first_line) {
        Ok(cmds) => scanner.commands(&cmds),
        Err(_) => {
            for (i, line) in src.lines().enumerate() {
                if line.trim_start().starts_with(ANNOTATION_PREFIX) {
                    if let Ok(cmds) = parse_script(line, first_line + i) {
                        scanner.commands(&cmds);
                    }
                }
            }
        }
    }
    scanner.out.annotations.sort_by_key(|a| a.location.line);
    scanner.out.malformed.sort_by_key(|m| m.location.line);
    scanner.out
}

struct Scanner {
    node: String,
    file: PathBuf,
    out: AnnotationScan,
}

fn classify(head: &str) -> Option<(AnnotationKind, &str)> {
    let rest = head.strip_prefix(ANNOTATION_PREFIX)?;
    if rest == "assert" {
        return Some((AnnotationKind::Assert, ""));
    }
    if let Some(cat) = rest.strip_prefix("enum.") {
        return Some((AnnotationKind::Enum, cat));
    }
    if let Some(name) = rest.strip_prefix("equality.") {
        return Some((AnnotationKind::Equality, name));
    }
    None
}

impl Scanner {
    fn location(&self, line: usize) -> Location {
        Location {
            node: self.node.clone(),
            file: self.file.clone(),
            line,
        }
    }

    fn commands(&mut self, cmds: &[Command]) {
        for cmd in cmds {
            self.command(cmd);
        }
    }

    fn command(&mut self, cmd: &Command) {
        let head = &cmd.words[0].raw;
        let skip_arg = self.annotation(cmd, head);
        for (i, word) in cmd.words.iter().enumerate() {
            if skip_arg && i > 0 {
                continue;
            }
            match &word.body {
                WordBody::Literal(text) => {
                    if text.contains(ANNOTATION_PREFIX) {
                        if let Ok(inner) = parse_script(text, word.line) {
                            self.commands(&inner);
                        }
                    }
                }
                WordBody::Subst(parts) => {
                    for part in parts {
                        if let Part::Script(inner) = part {
                            self.commands(inner);
                        }
                    }
                }
            }
        }
    }

    /// Record `cmd` if it is an annotation. Returns whether it was one.
    fn annotation(&mut self, cmd: &Command, head: &str) -> bool {
        if let Some(open) = head.find('(') {
            let Some((kind, name)) = classify(&head[..open]) else {
                return false;
            };
            let joined = cmd.words.iter().map(|w| w.raw.as_str()).collect::<Vec<_>>().join(" ");
            let inner = joined[open + 1..].strip_suffix(')').map(str::trim);
            match inner {
                Some(arg) if !arg.is_empty() => self.push(kind, name, arg, cmd.line, &head[..open]),
                _ => self.malformed(&joined, "expected exactly one argument in parentheses", cmd.line),
            }
            return true;
        }
        let Some((kind, name)) = classify(head) else {
            return false;
        };
        if cmd.words.len() != 2 {
            self.malformed(
                head,
                &format!("expected exactly one argument, got {}", cmd.words.len() - 1),
                cmd.line,
            );
        } else {
            self.push(kind, name, &cmd.words[1].raw, cmd.line, head);
        }
        true
    }

    fn push(&mut self, kind: AnnotationKind, name: &str, arg: &str, line: usize, head: &str) {
        if kind != AnnotationKind::Assert && name.is_empty() {
            self.malformed(head, &format!("missing {kind} name"), line);
            return;
        }
        self.out.annotations.push(Annotation {
            kind,
            name: name.to_string(),
            argument: arg.to_string(),
            location: self.location(line),
        });
    }

    fn malformed(&mut self, command: &str, message: &str, line: usize) {
        self.out.malformed.push(MalformedAnnotation {
            command: command.to_string(),
            message: message.to_string(),
            location: self.location(line),
        });
    }
}

impl Annotation {
    /// The argument as a literal word, or `None` if it needs substitution.
    pub fn literal_argument(&self) -> Option<String> {
        let cmds = parse_script(&self.argument, self.location.line).ok()?;
        match cmds.as_slice() {
            [cmd] if cmd.words.len() == 1 => cmd.words[0].literal(),
            _ => None,
        }
    }

    /// Value of an equality argument: braced arguments are expressions,
    /// anything else is substituted as a word.
    pub fn equality_value(&self, ctx: &TclContext) -> Result<TclValue, TclError> {
        let mut ctx = ctx.clone();
        let arg = self.argument.trim();
        match arg.strip_prefix('{').and_then(|a| a.strip_suffix('}')) {
            Some(inner) => ctx.eval_expr(inner, self.location.line),
            None => ctx.eval_word(arg, self.location.line),
        }
    }

    /// Truth value of an assert argument, read as `expr <argument>`.
    pub fn assert_value(&self, ctx: &TclContext) -> Result<TclValue, TclError> {
        let mut ctx = ctx.clone();
        let text = ctx.eval_word(self.argument.trim(), self.location.line)?;
        ctx.eval_expr(text.as_str(), self.location.line)
    }
}
