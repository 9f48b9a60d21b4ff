//! Identifier-level analysis of generated Python sources.
//!
//! No grammar is parsed: string literals and comments are blanked, then
//! definitions, bindings, imports and call sites are picked out with
//! line-oriented patterns.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

const BUILTINS: &[&str] = &[
    "abs", "aiter", "all", "anext", "any", "ascii", "bin", "bool", "breakpoint", "bytearray", "bytes", "callable",
    "chr", "classmethod", "compile", "complex", "delattr", "dict", "dir", "divmod", "enumerate", "eval", "exec",
    "filter", "float", "format", "frozenset", "getattr", "globals", "hasattr", "hash", "help", "hex", "id", "input",
    "int", "isinstance", "issubclass", "iter", "len", "list", "locals", "map", "max", "memoryview", "min", "next",
    "object", "oct", "open", "ord", "pow", "print", "property", "range", "repr", "reversed", "round", "set",
    "setattr", "slice", "sorted", "staticmethod", "str", "sum", "super", "tuple", "type", "vars", "zip",
    "__import__", "BaseException", "Exception", "ArithmeticError", "AssertionError", "AttributeError",
    "BlockingIOError", "BrokenPipeError", "BufferError", "ConnectionError", "ConnectionAbortedError",
    "ConnectionRefusedError", "ConnectionResetError", "EOFError", "EnvironmentError", "FileExistsError",
    "FileNotFoundError", "FloatingPointError", "GeneratorExit", "IOError", "ImportError", "IndentationError",
    "IndexError", "InterruptedError", "IsADirectoryError", "KeyError", "KeyboardInterrupt", "LookupError",
    "MemoryError", "ModuleNotFoundError", "NameError", "NotADirectoryError", "NotImplementedError", "OSError",
    "OverflowError", "PermissionError", "ProcessLookupError", "RecursionError", "ReferenceError", "RuntimeError",
    "StopIteration", "StopAsyncIteration", "SyntaxError", "SystemError", "SystemExit", "TabError", "TimeoutError",
    "TypeError", "UnboundLocalError", "UnicodeDecodeError", "UnicodeEncodeError", "UnicodeError", "ValueError",
    "ZeroDivisionError", "Warning", "UserWarning", "DeprecationWarning", "RuntimeWarning", "FutureWarning",
];

const KEYWORDS: &[&str] = &[
    "and", "as", "assert", "async", "await", "class", "def", "del", "elif", "else", "except", "finally", "for",
    "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield", "True", "False", "None", "match", "case", "print",
];

static DEF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^([ \t]*)(?:async[ \t]+)?(def|class)[ \t]+([A-Za-z_]\w*)").unwrap());
static IDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z_]\w*").unwrap());
static CALL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Za-z_]\w*)[ \t]*\(").unwrap());
static IMPORT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*import[ \t]+(.+)$").unwrap());
static FROM_IMPORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*from[ \t]+\S+[ \t]+import[ \t]+(\([^)]*\)|.+)$").unwrap());
static FOR_TARGET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bfor\s+(.+?)\s+in\b").unwrap());
static AS_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bas\s+([A-Za-z_]\w*)").unwrap());
static LAMBDA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\blambda\b([^:]*):").unwrap());
static SCOPE_DECL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:global|nonlocal)[ \t]+(.+)$").unwrap());
static WALRUS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([A-Za-z_]\w*)\s*:=").unwrap());

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name) || KEYWORDS.contains(&name)
}

/// Replaces the contents of string literals and comments with spaces,
/// keeping quotes and line breaks so positions of code stay recognizable.
pub fn mask(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                out.push(' ');
                i += 1;
            }
            continue;
        }
        if c == '\'' || c == '"' {
            let triple = i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c;
            let width = if triple { 3 } else { 1 };
            for _ in 0..width {
                out.push(c);
            }
            i += width;
            while i < chars.len() {
                if chars[i] == '\\' {
                    out.push(' ');
                    if i + 1 < chars.len() {
                        out.push(if chars[i + 1] == '\n' { '\n' } else { ' ' });
                    }
                    i += 2;
                    continue;
                }
                let closes = if triple {
                    i + 2 < chars.len() && chars[i] == c && chars[i + 1] == c && chars[i + 2] == c
                } else {
                    chars[i] == c || chars[i] == '\n'
                };
                if closes {
                    if chars[i] == '\n' {
                        out.push('\n');
                    } else {
                        for _ in 0..width {
                            out.push(c);
                        }
                    }
                    i += width;
                    break;
                }
                out.push(if chars[i] == '\n' { '\n' } else { ' ' });
                i += 1;
            }
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

/// Names introduced and used by one source file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Summary {
    /// Outermost `def`/`class` names in order of appearance, repeats kept.
    pub top_level: Vec<String>,
    /// Every `def`/`class` name at any depth.
    pub defined: BTreeSet<String>,
    pub imported: BTreeSet<String>,
    pub star_import: bool,
    /// Parameters, assignment targets and other local bindings.
    pub bound: BTreeSet<String>,
    /// Called bare identifiers (not attribute calls), first occurrence order.
    pub calls: Vec<String>,
}

impl Summary {
    /// Calls that no definition, import, binding or builtin accounts for.
    /// `project_defs` extends resolution to names defined in other files.
    pub fn unresolved<'a>(&'a self, project_defs: &BTreeSet<String>) -> Vec<&'a str> {
        if self.star_import {
            return Vec::new();
        }
        self.calls
            .iter()
            .map(String::as_str)
            .filter(|c| {
                !(self.defined.contains(*c)
                    || project_defs.contains(*c)
                    || self.imported.contains(*c)
                    || self.bound.contains(*c)
                    || is_builtin(c))
            })
            .collect()
    }
}

pub fn summarize(src: &str) -> Summary {
    let masked = mask(src);
    let mut s = Summary::default();

    let defs: Vec<(usize, &str, String)> = DEF
        .captures_iter(&masked)
        .map(|c| (indent_width(&c[1]), c.get(2).unwrap().as_str(), c[3].to_string()))
        .collect();
    if let Some(min) = defs.iter().map(|d| d.0).min() {
        s.top_level = defs.iter().filter(|d| d.0 == min).map(|d| d.2.clone()).collect();
    }
    s.defined = defs.iter().map(|d| d.2.clone()).collect();

    for c in IMPORT.captures_iter(&masked) {
        for item in c[1].split(',') {
            let item = item.trim();
            let name = match item.split_once(" as ") {
                Some((_, alias)) => alias.trim(),
                None => item.split('.').next().unwrap_or("").trim(),
            };
            if !name.is_empty() {
                s.imported.insert(name.to_string());
            }
        }
    }
    for c in FROM_IMPORT.captures_iter(&masked) {
        let list = c[1].trim().trim_start_matches('(').trim_end_matches(')');
        for item in list.split(',') {
            let item = item.trim();
            if item == "*" {
                s.star_import = true;
                continue;
            }
            let name = match item.split_once(" as ") {
                Some((_, alias)) => alias.trim(),
                None => item,
            };
            if IDENT.is_match(name) {
                s.imported.insert(name.to_string());
            }
        }
    }

    collect_params(&masked, &mut s.bound);
    for c in LAMBDA.captures_iter(&masked) {
        bind_idents(&c[1], &mut s.bound);
    }
    for c in FOR_TARGET.captures_iter(&masked) {
        bind_idents(&c[1], &mut s.bound);
    }
    for re in [&*AS_NAME, &*WALRUS] {
        for c in re.captures_iter(&masked) {
            s.bound.insert(c[1].to_string());
        }
    }
    for c in SCOPE_DECL.captures_iter(&masked) {
        bind_idents(&c[1], &mut s.bound);
    }
    for line in masked.lines() {
        if let Some(lhs) = assignment_target(line) {
            bind_idents(lhs, &mut s.bound);
        }
    }

    let mut seen = BTreeSet::new();
    for m in CALL.captures_iter(&masked) {
        let whole = m.get(1).unwrap();
        let before = masked[..whole.start()].trim_end_matches([' ', '\t']);
        if before.ends_with('.') {
            continue;
        }
        let prev_word = before.rsplit(|c: char| !(c.is_alphanumeric() || c == '_')).next().unwrap_or("");
        if prev_word == "def" || prev_word == "class" {
            continue;
        }
        let name = whole.as_str();
        if seen.insert(name.to_string()) {
            s.calls.push(name.to_string());
        }
    }
    s
}

fn indent_width(ws: &str) -> usize {
    ws.chars().map(|c| if c == '\t' { 8 } else { 1 }).sum()
}

fn bind_idents(text: &str, into: &mut BTreeSet<String>) {
    for m in IDENT.find_iter(text) {
        let preceded_by_dot = text[..m.start()].trim_end().ends_with('.');
        if !preceded_by_dot {
            into.insert(m.as_str().to_string());
        }
    }
}

// Parameter lists of every `def name(...)`, with balanced parentheses.
fn collect_params(masked: &str, into: &mut BTreeSet<String>) {
    for m in DEF.find_iter(masked) {
        let rest = &masked[m.end()..];
        let Some(open) = rest.find('(') else { continue };
        if !rest[..open].trim().is_empty() {
            continue;
        }
        let mut depth = 0usize;
        let mut params = String::new();
        for ch in rest[open..].chars() {
            match ch {
                '(' | '[' | '{' => {
                    depth += 1;
                    if depth == 1 {
                        continue;
                    }
                }
                ')' | ']' | '}' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                _ => {}
            }
            if depth == 1 {
                params.push(ch);
            } else {
                params.push(' ');
            }
        }
        for p in params.split(',') {
            let name = p.split([':', '=']).next().unwrap_or("").trim().trim_start_matches('*').trim();
            if IDENT.is_match(name) {
                into.insert(name.to_string());
            }
        }
    }
}

// Left-hand side of a plain or augmented assignment on this line, if any.
fn assignment_target(line: &str) -> Option<&str> {
    let bytes = line.as_bytes();
    let mut depth = 0i32;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b'=' if depth == 0 => {
                let next = bytes.get(i + 1).copied();
                let prev = if i > 0 { bytes[i - 1] } else { b' ' };
                if next == Some(b'=') || matches!(prev, b'=' | b'!' | b'<' | b'>' | b':') {
                    return None;
                }
                let lhs = &line[..i];
                let lhs = lhs.trim_end_matches(['+', '-', '*', '/', '%', '&', '|', '^', '@', '<', '>']);
                return Some(lhs);
            }
            _ => {}
        }
    }
    None
}

/// Lowercased name with `_`, `-` and spaces removed, so `checkPermission`
/// and `check_permission` compare equal.
pub fn normalize_name(name: &str) -> String {
    name.chars().filter(|c| !matches!(c, '_' | '-' | ' ')).flat_map(char::to_lowercase).collect()
}
