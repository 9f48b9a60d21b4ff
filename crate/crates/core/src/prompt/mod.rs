//! Prompt templates and the parsers that turn model replies back into
//! domain values.

mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Dimension;

pub use parse::{
    extract_code, extract_first_json, parse_function_rationales, parse_module_rationales, parse_score,
    parse_score_in_range,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("placeholder `{0}` is not bound")]
    UnboundPlaceholder(String),
    #[error("no JSON value found in reply")]
    NoJsonFound,
    #[error("reply JSON does not match the expected schema at element {0}")]
    SchemaMismatch(usize),
    #[error("reply contained an empty list")]
    EmptyList,
    #[error("module `{0}` does not appear in the reply")]
    ModuleNotInOutput(String),
    #[error("extracted source is empty")]
    EmptySource,
    #[error("no score found in reply")]
    NoScoreFound,
    #[error("score {0} is out of range")]
    OutOfRange(f64),
    #[error("template catalog: {0}")]
    Catalog(String),
}

/// Project-completeness sub-metrics scored by the judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Completeness,
    Correctness,
    Usability,
    Robustness,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Completeness, Metric::Correctness, Metric::Usability, Metric::Robustness];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Completeness => "completeness",
            Metric::Correctness => "correctness",
            Metric::Usability => "usability",
            Metric::Robustness => "robustness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    Strategic,
    Tactical,
    Operational,
    VerifyStrategic,
    VerifyTactical,
    VerifyOperational,
    Rectify,
    ConflictDetect,
    ConflictResolve,
    Judge(Metric),
}

impl TemplateId {
    pub const ALL: [TemplateId; 13] = [
        TemplateId::Strategic,
        TemplateId::Tactical,
        TemplateId::Operational,
        TemplateId::VerifyStrategic,
        TemplateId::VerifyTactical,
        TemplateId::VerifyOperational,
        TemplateId::Rectify,
        TemplateId::ConflictDetect,
        TemplateId::ConflictResolve,
        TemplateId::Judge(Metric::Completeness),
        TemplateId::Judge(Metric::Correctness),
        TemplateId::Judge(Metric::Usability),
        TemplateId::Judge(Metric::Robustness),
    ];

    pub fn generation(dimension: Dimension) -> Self {
        match dimension {
            Dimension::Strategic => TemplateId::Strategic,
            Dimension::Tactical => TemplateId::Tactical,
            Dimension::Operational => TemplateId::Operational,
        }
    }

    pub fn verification(dimension: Dimension) -> Self {
        match dimension {
            Dimension::Strategic => TemplateId::VerifyStrategic,
            Dimension::Tactical => TemplateId::VerifyTactical,
            Dimension::Operational => TemplateId::VerifyOperational,
        }
    }

    /// Stem of the catalog file holding this template.
    pub fn file_stem(self) -> String {
        match self {
            TemplateId::Strategic => "strategic".into(),
            TemplateId::Tactical => "tactical".into(),
            TemplateId::Operational => "operational".into(),
            TemplateId::VerifyStrategic => "verify_strategic".into(),
            TemplateId::VerifyTactical => "verify_tactical".into(),
            TemplateId::VerifyOperational => "verify_operational".into(),
            TemplateId::Rectify => "rectify".into(),
            TemplateId::ConflictDetect => "conflict_detect".into(),
            TemplateId::ConflictResolve => "conflict_resolve".into(),
            TemplateId::Judge(m) => format!("judge_{}", m.as_str()),
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateId::Strategic => include_str!("../../templates/strategic.txt"),
            TemplateId::Tactical => include_str!("../../templates/tactical.txt"),
            TemplateId::Operational => include_str!("../../templates/operational.txt"),
            TemplateId::VerifyStrategic => include_str!("../../templates/verify_strategic.txt"),
            TemplateId::VerifyTactical => include_str!("../../templates/verify_tactical.txt"),
            TemplateId::VerifyOperational => include_str!("../../templates/verify_operational.txt"),
            TemplateId::Rectify => include_str!("../../templates/rectify.txt"),
            TemplateId::ConflictDetect => include_str!("../../templates/conflict_detect.txt"),
            TemplateId::ConflictResolve => include_str!("../../templates/conflict_resolve.txt"),
            TemplateId::Judge(Metric::Completeness) => include_str!("../../templates/judge_completeness.txt"),
            TemplateId::Judge(Metric::Correctness) => include_str!("../../templates/judge_correctness.txt"),
            TemplateId::Judge(Metric::Usability) => include_str!("../../templates/judge_usability.txt"),
            TemplateId::Judge(Metric::Robustness) => include_str!("../../templates/judge_robustness.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.file_stem())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl PromptTemplate {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut names = Vec::new();
        for seg in segments(&self.body) {
            if let Segment::Hole(name) = seg {
                if !names.iter().any(|n| n == name) {
                    names.push(name.to_string());
                }
            }
        }
        names
    }

    /// Substitutes every `{{name}}`. Bound values are inserted verbatim and
    /// never rescanned.
    pub fn render(&self, bindings: &Bindings) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len());
        for seg in segments(&self.body) {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Hole(name) => {
                    let value = bindings.get(name).ok_or_else(|| PromptError::UnboundPlaceholder(name.to_string()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

pub type Bindings = BTreeMap<String, String>;

/// Convenience constructor for bindings.
pub fn bind<const N: usize>(pairs: [(&str, &str); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

enum Segment<'a> {
    Text(&'a str),
    Hole(&'a str),
}

fn segments(body: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let name_len = after
            .char_indices()
            .find(|(i, c)| !(c.is_ascii_alphanumeric() || *c == '_') || (*i == 0 && c.is_ascii_digit()))
            .map(|(i, _)| i)
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with("}}") {
            out.push(Segment::Text(&rest[..start]));
            out.push(Segment::Hole(&after[..name_len]));
            rest = &after[name_len + 2..];
        } else {
            out.push(Segment::Text(&rest[..start + 2]));
            rest = after;
        }
    }
    out.push(Segment::Text(rest));
    out
}

/// Immutable set of templates keyed by id.
#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateCatalog {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| (id, PromptTemplate { id, body: id.builtin_body().to_string() }))
            .collect();
        Self { templates }
    }

    /// Built-in catalog with any `<stem>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(PromptError::Catalog(format!("{} is not a directory", dir.display())));
        }
        let mut catalog = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.file_stem()));
            if path.is_file() {
                let body = std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Catalog(format!("{}: {e}", path.display())))?;
                catalog.templates.insert(id, PromptTemplate { id, body });
            }
        }
        Ok(catalog)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, bindings: &Bindings) -> Result<String, PromptError> {
        self.get(id).render(bindings)
    }
}

/// Renders with the built-in catalog.
pub fn render(id: TemplateId, bindings: &Bindings) -> Result<String, PromptError> {
    TemplateCatalog::builtin().render(id, bindings)
}
