// SPDX-License-Identifier: Apache-2.0

//! Intent/implementation blocks.
//!
//! Design intent is written as `mflowgen.assert` properties between marker
//! comments, followed by the Tcl that realises it:
//!
//! ```tcl
//! # mflowgen-intent begin
//! mflowgen.assert {$aon_x % $switch_pitch == 0}
//! # mflowgen-intent end
//! # mflowgen-impl begin
//! set switch_pitch 3
//! set aon_x [expr {4 * $switch_pitch}]
//! # mflowgen-impl end
//! ```
//!
//! Only blank lines may separate the two regions.

use std::collections::BTreeMap;
use std::fmt;

use super::annotation::{scan_annotations, AnnotationKind, MalformedAnnotation};
use crate::tcl::TclValue;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Property {
    /// Argument of the `mflowgen.assert` call as written.
    pub expr: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntentBlock {
    pub properties: Vec<Property>,
    pub implementation: String,
    /// Line of the first implementation line (just after its begin marker).
    pub impl_line: usize,
    /// Lines of the intent begin and end markers.
    pub intent_span: (usize, usize),
    /// Lines of the impl begin and end markers.
    pub impl_span: (usize, usize),
    /// Variables supplied from outside (parameters, technology constants),
    /// bound before the implementation runs.
    pub bindings: BTreeMap<String, TclValue>,
}

impl IntentBlock {
    /// Whether `line` falls inside either region of this block.
    pub fn contains_line(&self, line: usize) -> bool {
        (self.intent_span.0..=self.intent_span.1).contains(&line)
            || (self.impl_span.0..=self.impl_span.1).contains(&line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntentError {
    UnbalancedMarkers { line: usize, message: String },
    IntentWithoutImpl { line: usize },
    Malformed(MalformedAnnotation),
}

impl IntentError {
    pub fn line(&self) -> usize {
        match self {
            IntentError::UnbalancedMarkers { line, .. } | IntentError::IntentWithoutImpl { line } => *line,
            IntentError::Malformed(m) => m.location.line,
        }
    }
}

impl fmt::Display for IntentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntentError::UnbalancedMarkers { line, message } => {
                write!(f, "line {line}: UnbalancedMarkers: {message}")
            }
            IntentError::IntentWithoutImpl { line } => write!(
                f,
                "line {line}: IntentWithoutImpl: intent block is not followed by an impl block"
            ),
            IntentError::Malformed(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for IntentError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    IntentBegin,
    IntentEnd,
    ImplBegin,
    ImplEnd,
}

fn marker(line: &str) -> Option<Marker> {
    let rest = line.trim().strip_prefix('#')?;
    let mut words = rest.split_whitespace();
    let m = match (words.next()?, words.next()?) {
        ("mflowgen-intent", "begin") => Marker::IntentBegin,
        ("mflowgen-intent", "end") => Marker::IntentEnd,
        ("mflowgen-impl", "begin") => Marker::ImplBegin,
        ("mflowgen-impl", "end") => Marker::ImplEnd,
        _ => return None,
    };
    words.next().is_none().then_some(m)
}

enum State {
    Outside,
    Intent { begin: usize },
    Between { begin: usize, end: usize },
    Impl { intent: (usize, usize), begin: usize },
}

/// Split `src` into intent blocks.
pub fn extract_intent_blocks(src: &str) -> Result<Vec<IntentBlock>, IntentError> {
    let lines: Vec<&str> = src.lines().collect();
    let mut blocks = Vec::new();
    let mut state = State::Outside;
    let unbalanced = |line: usize, message: &str| IntentError::UnbalancedMarkers {
        line,
        message: message.to_string(),
    };
    for (i, text) in lines.iter().enumerate() {
        let n = i + 1;
        let m = marker(text);
        state = match (state, m) {
            (State::Outside, None) => State::Outside,
            (State::Outside, Some(Marker::IntentBegin)) => State::Intent { begin: n },
            (State::Outside, Some(_)) => return Err(unbalanced(n, "marker outside an intent block")),
            (State::Intent { begin }, None) => State::Intent { begin },
            (State::Intent { begin }, Some(Marker::IntentEnd)) => State::Between { begin, end: n },
            (State::Intent { .. }, Some(_)) => return Err(unbalanced(n, "expected `# mflowgen-intent end`")),
            (State::Between { begin, end }, None) if text.trim().is_empty() => State::Between { begin, end },
            (State::Between { begin, end }, Some(Marker::ImplBegin)) => State::Impl {
                intent: (begin, end),
                begin: n,
            },
            (State::Between { begin, .. }, _) => return Err(IntentError::IntentWithoutImpl { line: begin }),
            (State::Impl { intent, begin }, None) => State::Impl { intent, begin },
            (State::Impl { intent, begin }, Some(Marker::ImplEnd)) => {
                blocks.push(build_block(&lines, intent, (begin, n))?);
                State::Outside
            }
            (State::Impl { .. }, Some(_)) => return Err(unbalanced(n, "expected `# mflowgen-impl end`")),
        };
    }
    match state {
        State::Outside => Ok(blocks),
        State::Intent { begin } => Err(unbalanced(begin, "intent block is never closed")),
        State::Between { begin, .. } => Err(IntentError::IntentWithoutImpl { line: begin }),
        State::Impl { begin, .. } => Err(unbalanced(begin, "impl block is never closed")),
    }
}

fn build_block(lines: &[&str], intent: (usize, usize), imp: (usize, usize)) -> Result<IntentBlock, IntentError> {
    // Marker line numbers are 1-based; region bodies sit strictly between.
    let region = |(b, e): (usize, usize)| lines[b..e - 1].join("\n");
    let scan = scan_annotations(&region(intent), intent.0 + 1, "", "");
    if let Some(m) = scan.malformed.into_iter().next() {
        return Err(IntentError::Malformed(m));
    }
    let properties = scan
        .annotations
        .into_iter()
        .filter(|a| a.kind == AnnotationKind::Assert)
        .map(|a| Property {
            expr: a.argument,
            line: a.location.line,
        })
        .collect();
    Ok(IntentBlock {
        properties,
        implementation: region(imp),
        impl_line: imp.0 + 1,
        intent_span: intent,
        impl_span: imp,
        bindings: BTreeMap::new(),
    })
}
