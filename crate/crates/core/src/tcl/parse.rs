// SPDX-License-Identifier: Apache-2.0

//! Tcl script parser: commands, words, and substitution parts.
//!
//! Follows the standard Tcl word rules (braces, quotes, `$` and `[]`
//! substitution, backslash sequences, `#` comments). Every command and
//! nested script records the source line it starts on.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub words: Vec<Word>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub body: WordBody,
    /// Source text of the word exactly as written.
    pub raw: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WordBody {
    /// A braced word; no substitution.
    Literal(String),
    Subst(Vec<Part>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Var(String),
    /// `$name(index)`; arrays are outside the supported subset.
    ArrayVar(String),
    Script(Vec<Command>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub line: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl Word {
    /// The literal text of a word without substitutions, if it has none.
    pub fn literal(&self) -> Option<String> {
        match &self.body {
            WordBody::Literal(s) => Some(s.clone()),
            WordBody::Subst(parts) => {
                let mut out = String::new();
                for p in parts {
                    match p {
                        Part::Text(t) => out.push_str(t),
                        _ => return None,
                    }
                }
                Some(out)
            }
        }
    }

    pub fn is_braced(&self) -> bool {
        matches!(self.body, WordBody::Literal(_))
    }
}

/// Parse a whole script. `first_line` is the line number of the first
/// character of `src`.
pub fn parse_script(src: &str, first_line: usize) -> Result<Vec<Command>, ParseError> {
    Parser::new(src, first_line).commands(false)
}

/// Decode one backslash sequence at the start of `s` (which begins with a
/// backslash). Returns the replacement text and the number of bytes used.
pub fn backslash_sequence(s: &str) -> (String, usize) {
    let bytes = s.as_bytes();
    debug_assert_eq!(bytes.first(), Some(&b'\\'));
    let Some(next) = s[1..].chars().next() else {
        return ("\\".to_string(), 1);
    };
    let simple = |c: char| (c.to_string(), 2);
    match next {
        'a' => simple('\x07'),
        'b' => simple('\x08'),
        'f' => simple('\x0c'),
        'n' => simple('\n'),
        'r' => simple('\r'),
        't' => simple('\t'),
        'v' => simple('\x0b'),
        '\n' => {
            let mut used = 2;
            while used < bytes.len() && matches!(bytes[used], b' ' | b'\t') {
                used += 1;
            }
            (" ".to_string(), used)
        }
        'x' | 'u' | 'U' => {
            let max = match next {
                'x' => 2,
                'u' => 4,
                _ => 8,
            };
            let digits: String = s[2..]
                .chars()
                .take_while(|c| c.is_ascii_hexdigit())
                .take(max)
                .collect();
            if digits.is_empty() {
                return (next.to_string(), 2);
            }
            let code = u32::from_str_radix(&digits, 16).unwrap_or(0xfffd);
            let ch = char::from_u32(code).unwrap_or('\u{fffd}');
            (ch.to_string(), 2 + digits.len())
        }
        '0'..='7' => {
            let digits: String = s[1..]
                .chars()
                .take_while(|c| ('0'..='7').contains(c))
                .take(3)
                .collect();
            let code = u32::from_str_radix(&digits, 8).unwrap_or(0) & 0xff;
            (char::from_u32(code).unwrap().to_string(), 1 + digits.len())
        }
        other => (other.to_string(), 1 + other.len_utf8()),
    }
}

pub(crate) fn is_var_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Cursor over Tcl source. Shared with the `expr` parser, which needs the
/// same substitution rules.
pub(crate) struct Parser<'a> {
    pub src: &'a str,
    pub pos: usize,
    pub line: usize,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str, first_line: usize) -> Self {
        Parser {
            src,
            pos: 0,
            line: first_line,
        }
    }

    pub fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    pub fn peek_at(&self, offset: usize) -> Option<u8> {
        self.src.as_bytes().get(self.pos + offset).copied()
    }

    pub fn eof(&self) -> bool {
        self.pos >= self.src.len()
    }

    /// Advance `n` bytes, counting newlines.
    pub fn advance(&mut self, n: usize) {
        let end = (self.pos + n).min(self.src.len());
        self.line += self.src.as_bytes()[self.pos..end]
            .iter()
            .filter(|b| **b == b'\n')
            .count();
        self.pos = end;
    }

    fn next_char(&mut self) -> char {
        let ch = self.src[self.pos..].chars().next().unwrap();
        self.advance(ch.len_utf8());
        ch
    }

    pub fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            message: message.into(),
            line: self.line,
        }
    }

    fn at_backslash_newline(&self) -> bool {
        self.peek() == Some(b'\\') && self.peek_at(1) == Some(b'\n')
    }

    fn skip_inline_space(&mut self) {
        loop {
            match self.peek() {
                Some(b' ' | b'\t' | b'\r' | b'\x0b' | b'\x0c') => self.advance(1),
                Some(b'\\') if self.at_backslash_newline() => {
                    let (_, used) = backslash_sequence(&self.src[self.pos..]);
                    self.advance(used);
                }
                _ => return,
            }
        }
    }

    fn skip_comment(&mut self) {
        while let Some(b) = self.peek() {
            match b {
                b'\\' => {
                    self.advance(1);
                    if !self.eof() {
                        self.next_char();
                    }
                }
                b'\n' => {
                    self.advance(1);
                    return;
                }
                _ => {
                    self.next_char();
                }
            }
        }
    }

    /// Parse commands until end of input, or until the `]` closing a
    /// command substitution when `nested` is set (the `]` is consumed).
    pub fn commands(&mut self, nested: bool) -> Result<Vec<Command>, ParseError> {
        let mut out = Vec::new();
        loop {
            loop {
                self.skip_inline_space();
                match self.peek() {
                    Some(b'\n' | b';') => self.advance(1),
                    _ => break,
                }
            }
            match self.peek() {
                None if nested => return Err(self.error("missing close-bracket")),
                None => return Ok(out),
                Some(b']') if nested => {
                    self.advance(1);
                    return Ok(out);
                }
                Some(b'#') => {
                    self.skip_comment();
                    continue;
                }
                _ => {}
            }
            let line = self.line;
            let mut words = Vec::new();
            loop {
                self.skip_inline_space();
                match self.peek() {
                    None => break,
                    Some(b'\n' | b';') => {
                        self.advance(1);
                        break;
                    }
                    Some(b']') if nested => break,
                    _ => words.push(self.word(nested)?),
                }
            }
            if !words.is_empty() {
                out.push(Command { words, line });
            }
        }
    }

    fn word_ended(&self, nested: bool) -> bool {
        match self.peek() {
            None => true,
            Some(b' ' | b'\t' | b'\r' | b'\n' | b';' | b'\x0b' | b'\x0c') => true,
            Some(b']') => nested,
            Some(b'\\') => self.at_backslash_newline(),
            _ => false,
        }
    }

    fn word(&mut self, nested: bool) -> Result<Word, ParseError> {
        let start = self.pos;
        let line = self.line;
        let body = match self.peek() {
            Some(b'{') => {
                let text = self.braced()?;
                if !self.word_ended(nested) {
                    return Err(self.error("extra characters after close-brace"));
                }
                WordBody::Literal(text)
            }
            Some(b'"') => {
                self.advance(1);
                let parts = self.parts(true, nested)?;
                self.advance(1);
                if !self.word_ended(nested) {
                    return Err(self.error("extra characters after close-quote"));
                }
                WordBody::Subst(parts)
            }
            _ => WordBody::Subst(self.parts(false, nested)?),
        };
        Ok(Word {
            body,
            raw: self.src[start..self.pos].to_string(),
            line,
        })
    }

    /// Parse `{...}` at the cursor, returning the inner text with
    /// backslash-newline sequences collapsed to a space.
    pub fn braced(&mut self) -> Result<String, ParseError> {
        let open_line = self.line;
        self.advance(1);
        let mut depth = 1;
        let mut out = String::new();
        loop {
            let Some(b) = self.peek() else {
                return Err(ParseError {
                    message: "missing close-brace".into(),
                    line: open_line,
                });
            };
            match b {
                b'\\' if self.at_backslash_newline() => {
                    let (_, used) = backslash_sequence(&self.src[self.pos..]);
                    self.advance(used);
                    out.push(' ');
                }
                b'\\' => {
                    out.push('\\');
                    self.advance(1);
                    if !self.eof() {
                        out.push(self.next_char());
                    }
                }
                b'{' => {
                    depth += 1;
                    out.push('{');
                    self.advance(1);
                }
                b'}' => {
                    depth -= 1;
                    self.advance(1);
                    if depth == 0 {
                        return Ok(out);
                    }
                    out.push('}');
                }
                _ => out.push(self.next_char()),
            }
        }
    }

    /// Parse a `$` reference at the cursor. Returns `None` (consuming only
    /// the `$`) when no variable name follows.
    pub fn variable(&mut self) -> Result<Option<Part>, ParseError> {
        self.advance(1);
        if self.peek() == Some(b'{') {
            let rest = &self.src[self.pos + 1..];
            let Some(end) = rest.find('}') else {
                return Err(self.error("missing close-brace for variable name"));
            };
            let name = rest[..end].to_string();
            self.advance(end + 2);
            return Ok(Some(Part::Var(name)));
        }
        let start = self.pos;
        loop {
            match self.peek() {
                Some(b) if is_var_char(b) => self.advance(1),
                Some(b':') if self.peek_at(1) == Some(b':') => self.advance(2),
                _ => break,
            }
        }
        if self.pos == start {
            return Ok(None);
        }
        let name = self.src[start..self.pos].to_string();
        if self.peek() == Some(b'(') {
            let rest = &self.src[self.pos..];
            let Some(end) = rest.find(')') else {
                return Err(self.error("missing )"));
            };
            self.advance(end + 1);
            return Ok(Some(Part::ArrayVar(name)));
        }
        Ok(Some(Part::Var(name)))
    }

    /// Parse substitution parts up to the end of a bare word, or up to (not
    /// including) the closing quote when `quoted`.
    pub fn parts(&mut self, quoted: bool, nested: bool) -> Result<Vec<Part>, ParseError> {
        let mut parts = Vec::new();
        let mut buf = String::new();
        let flush = |buf: &mut String, parts: &mut Vec<Part>| {
            if !buf.is_empty() {
                parts.push(Part::Text(std::mem::take(buf)));
            }
        };
        loop {
            let Some(b) = self.peek() else {
                if quoted {
                    return Err(self.error("missing \""));
                }
                break;
            };
            if quoted && b == b'"' {
                break;
            }
            if !quoted && self.word_ended(nested) {
                break;
            }
            match b {
                b'$' => match self.variable()? {
                    Some(part) => {
                        flush(&mut buf, &mut parts);
                        parts.push(part);
                    }
                    None => buf.push('$'),
                },
                b'[' => {
                    self.advance(1);
                    let cmds = self.commands(true)?;
                    flush(&mut buf, &mut parts);
                    parts.push(Part::Script(cmds));
                }
                b'\\' => {
                    let (s, used) = backslash_sequence(&self.src[self.pos..]);
                    buf.push_str(&s);
                    self.advance(used);
                }
                _ => buf.push(self.next_char()),
            }
        }
        flush(&mut buf, &mut parts);
        Ok(parts)
    }
}
