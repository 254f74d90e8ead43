// SPDX-License-Identifier: Apache-2.0

//! Tcl list parsing and canonical formatting.

use super::parse::backslash_sequence;

fn is_list_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c')
}

/// Split a string into list elements.
pub fn list_parse(text: &str) -> Result<Vec<String>, String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        while i < bytes.len() && is_list_space(bytes[i]) {
            i += 1;
        }
        if i >= bytes.len() {
            return Ok(out);
        }
        match bytes[i] {
            b'{' => {
                let start = i + 1;
                let mut depth = 1;
                i += 1;
                while i < bytes.len() {
                    match bytes[i] {
                        b'\\' => i += 1,
                        b'{' => depth += 1,
                        b'}' => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    i += 1;
                }
                if depth != 0 || i >= bytes.len() {
                    return Err("unmatched open brace in list".to_string());
                }
                out.push(text[start..i].to_string());
                i += 1;
                if i < bytes.len() && !is_list_space(bytes[i]) {
                    return Err("list element in braces followed by non-space".to_string());
                }
            }
            b'"' => {
                i += 1;
                let mut elem = String::new();
                loop {
                    if i >= bytes.len() {
                        return Err("unmatched open quote in list".to_string());
                    }
                    match bytes[i] {
                        b'"' => break,
                        b'\\' => {
                            let (s, used) = backslash_sequence(&text[i..]);
                            elem.push_str(&s);
                            i += used;
                        }
                        _ => {
                            let ch = text[i..].chars().next().unwrap();
                            elem.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push(elem);
                i += 1;
                if i < bytes.len() && !is_list_space(bytes[i]) {
                    return Err("list element in quotes followed by non-space".to_string());
                }
            }
            _ => {
                let mut elem = String::new();
                while i < bytes.len() && !is_list_space(bytes[i]) {
                    if bytes[i] == b'\\' {
                        let (s, used) = backslash_sequence(&text[i..]);
                        elem.push_str(&s);
                        i += used;
                    } else {
                        let ch = text[i..].chars().next().unwrap();
                        elem.push(ch);
                        i += ch.len_utf8();
                    }
                }
                out.push(elem);
            }
        }
    }
}

fn needs_quoting(elem: &str, first: bool) -> bool {
    elem.is_empty()
        || (first && elem.starts_with('#'))
        || elem.bytes().any(|b| {
            is_list_space(b) || matches!(b, b'{' | b'}' | b'[' | b']' | b'$' | b';' | b'\\' | b'"')
        })
}

fn can_brace(elem: &str) -> bool {
    let mut depth = 0i32;
    let bytes = elem.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => {
                if i + 1 >= bytes.len() {
                    return false;
                }
                i += 1;
            }
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
        i += 1;
    }
    depth == 0
}

fn backslash_quote(elem: &str, first: bool, out: &mut String) {
    for (i, ch) in elem.chars().enumerate() {
        match ch {
            '{' | '}' | '[' | ']' | '$' | ';' | '\\' | '"' | ' ' => {
                out.push('\\');
                out.push(ch);
            }
            '#' if i == 0 && first => out.push_str("\\#"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\x0b' => out.push_str("\\v"),
            '\x0c' => out.push_str("\\f"),
            _ => out.push(ch),
        }
    }
}

/// Join elements into a canonical Tcl list string (the form `list` returns).
pub fn list_format<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for (idx, item) in items.into_iter().enumerate() {
        let elem = item.as_ref();
        if idx > 0 {
            out.push(' ');
        }
        let first = idx == 0;
        if !needs_quoting(elem, first) {
            out.push_str(elem);
        } else if elem.is_empty() {
            out.push_str("{}");
        } else if can_brace(elem) {
            out.push('{');
            out.push_str(elem);
            out.push('}');
        } else {
            backslash_quote(elem, first, &mut out);
        }
    }
    out
}
