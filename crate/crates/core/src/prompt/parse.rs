use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use super::PromptError;
use crate::model::{FunctionRationale, ModuleRationale};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Shape {
    Array,
    Object,
}

/// First JSON array or object embedded anywhere in `text` that satisfies
/// `accept`. Prose, markdown fences and trailing commentary are skipped.
fn scan_json(text: &str, shape: Shape, accept: impl Fn(&Value) -> bool) -> Option<Value> {
    let open = match shape {
        Shape::Array => '[',
        Shape::Object => '{',
    };
    for (i, _) in text.match_indices(open) {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            let ok_shape = match shape {
                Shape::Array => value.is_array(),
                Shape::Object => value.is_object(),
            };
            if ok_shape && accept(&value) {
                return Some(value);
            }
        }
    }
    None
}

/// First JSON object found in `text`.
pub fn extract_first_json(text: &str) -> Option<Value> {
    scan_json(text, Shape::Object, |_| true)
}

/// Case-insensitive key lookup returning a non-empty trimmed string.
fn string_field(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    obj.iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(key))
        .and_then(|(_, v)| v.as_str())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v)
}

/// Module rationales from the strategic reply: the first JSON array whose
/// elements carry `Module` and `Responsibility`.
pub fn parse_module_rationales(text: &str) -> Result<Vec<ModuleRationale>, PromptError> {
    let value = scan_json(text, Shape::Array, |_| true).ok_or(PromptError::NoJsonFound)?;
    let items = value.as_array().expect("array shape");
    if items.is_empty() {
        return Err(PromptError::EmptyList);
    }
    items
        .iter()
        .enumerate()
        .map(|(index, item)| {
            let obj = item.as_object().ok_or(PromptError::SchemaMismatch(index))?;
            match (string_field(obj, "Module"), string_field(obj, "Responsibility")) {
                (Some(module_name), Some(responsibility)) => Ok(ModuleRationale { module_name, responsibility, index }),
                _ => Err(PromptError::SchemaMismatch(index)),
            }
        })
        .collect()
}

/// Sub-function rationales for `parent` from the tactical reply.
///
/// Expects `{"Modules": [{"Module", "SubFunctions": [{"Function", "Responsibility"}]}]}`;
/// the module entry is chosen by exact name, then case-insensitively.
pub fn parse_function_rationales(text: &str, parent: &str) -> Result<Vec<FunctionRationale>, PromptError> {
    let value = match scan_json(text, Shape::Object, |v| {
        v.as_object().and_then(|o| field(o, "Modules")).is_some_and(Value::is_array)
    }) {
        Some(v) => v,
        None if extract_first_json(text).is_some() => return Err(PromptError::SchemaMismatch(0)),
        None => return Err(PromptError::NoJsonFound),
    };
    let modules = field(value.as_object().unwrap(), "Modules").and_then(Value::as_array).unwrap();

    let mut entries = Vec::with_capacity(modules.len());
    for (i, m) in modules.iter().enumerate() {
        let obj = m.as_object().ok_or(PromptError::SchemaMismatch(i))?;
        let name = string_field(obj, "Module").ok_or(PromptError::SchemaMismatch(i))?;
        entries.push((name, obj));
    }
    let wanted = parent.trim();
    let (_, obj) = entries
        .iter()
        .find(|(name, _)| name == wanted)
        .or_else(|| entries.iter().find(|(name, _)| name.eq_ignore_ascii_case(wanted)))
        .ok_or_else(|| PromptError::ModuleNotInOutput(parent.to_string()))?;

    let subs = field(obj, "SubFunctions").and_then(Value::as_array).ok_or(PromptError::SchemaMismatch(0))?;
    if subs.is_empty() {
        return Err(PromptError::EmptyList);
    }
    subs.iter()
        .enumerate()
        .map(|(i, s)| {
            let o = s.as_object().ok_or(PromptError::SchemaMismatch(i))?;
            match (string_field(o, "Function"), string_field(o, "Responsibility")) {
                (Some(function_name), Some(responsibility)) => {
                    Ok(FunctionRationale { function_name, responsibility, parent_module: parent.to_string() })
                }
                _ => Err(PromptError::SchemaMismatch(i)),
            }
        })
        .collect()
}

const LANGUAGE_TAGS: &[&str] = &[
    "python", "py", "python3", "rust", "rs", "javascript", "js", "typescript", "ts", "java", "go", "c", "cpp",
    "c++", "csharp", "cs", "ruby", "rb", "php", "kotlin", "swift", "sql", "bash", "sh", "html", "css",
];

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Source code from a reply: the concatenation of all fenced blocks in
/// order, or the whole reply trimmed when there are none.
pub fn extract_code(text: &str) -> Result<String, PromptError> {
    let lines: Vec<&str> = text.lines().collect();
    let code = if lines.iter().any(|l| is_fence(l)) {
        let mut blocks: Vec<String> = Vec::new();
        let mut current: Option<Vec<&str>> = None;
        for line in &lines {
            if is_fence(line) {
                match current.take() {
                    Some(block) => blocks.push(finish_block(block)),
                    None => current = Some(Vec::new()),
                }
            } else if let Some(block) = current.as_mut() {
                block.push(line);
            }
        }
        // unterminated final fence runs to the end of the reply
        if let Some(block) = current {
            blocks.push(finish_block(block));
        }
        blocks.retain(|b| !b.trim().is_empty());
        blocks.join("\n\n")
    } else {
        text.trim().replace("```", "")
    };
    if code.trim().is_empty() {
        return Err(PromptError::EmptySource);
    }
    Ok(code)
}

fn finish_block(mut lines: Vec<&str>) -> String {
    if let Some(first) = lines.first() {
        let tag = first.trim().to_ascii_lowercase();
        if LANGUAGE_TAGS.contains(&tag.as_str()) {
            lines.remove(0);
        }
    }
    let mut block = lines.join("\n");
    let trimmed_len = block.trim_end().len();
    block.truncate(trimmed_len);
    while block.starts_with('\n') {
        block.remove(0);
    }
    block
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?(?:\d+(?:\.\d*)?|\.\d+)").unwrap())
}

/// First numeric literal in `text` lying in `[min, max]`. When literals exist
/// but none is in range, the first one is reported as out of range.
pub fn parse_score_in_range(text: &str, min: f64, max: f64) -> Result<f64, PromptError> {
    let mut first_out = None;
    for m in number_pattern().find_iter(text) {
        let Ok(v) = m.as_str().trim_end_matches('.').parse::<f64>() else { continue };
        if (min..=max).contains(&v) {
            return Ok(v);
        }
        first_out.get_or_insert(v);
    }
    Err(first_out.map(PromptError::OutOfRange).unwrap_or(PromptError::NoScoreFound))
}

/// Verification score in `[0, 1]`.
pub fn parse_score(text: &str) -> Result<f64, PromptError> {
    parse_score_in_range(text, 0.0, 1.0)
}
