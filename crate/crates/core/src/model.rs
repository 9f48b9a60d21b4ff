//! Domain types shared across the pipeline.
//!
//! Every type here is a plain value: serializable, cloneable, and mutated only
//! by producing a new version.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("task definition is empty")]
    EmptyTaskDefinition,
    #[error("key features list is empty")]
    EmptyKeyFeatures,
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("duplicate module name `{0}`")]
    DuplicateModule(String),
    #[error("duplicate function `{function}` in module `{module}`")]
    DuplicateFunction { module: String, function: String },
    #[error("function `{function}` references unknown module `{module}`")]
    UnknownParentModule { module: String, function: String },
    #[error("empty {0}")]
    EmptyField(&'static str),
}

/// Dataset category of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Game,
    Web,
    #[serde(rename = "AI_ML", alias = "AI/ML")]
    AiMl,
    Database,
    Mobile,
    Tool,
}

/// The single structured input a project is generated from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPrompt {
    pub id: String,
    pub category: Category,
    pub task_definition: String,
    pub key_features: Vec<String>,
    #[serde(default)]
    pub technical_specifications: Vec<String>,
}

impl TaskPrompt {
    /// Renders the prompt in the three-section layout used by the dataset.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("Task Definition:\n\n");
        out.push_str(self.task_definition.trim());
        out.push_str("\n\nKey Features:\n\n");
        for feature in &self.key_features {
            out.push_str(feature.trim());
            out.push('\n');
        }
        out.push_str("\nTechnical Specifications:\n\n");
        for (i, spec) in self.technical_specifications.iter().enumerate() {
            out.push_str(&format!("({}) {}\n", i + 1, spec.trim()));
        }
        out.trim_end().to_string()
    }
}

/// Returns the prompt unchanged iff it satisfies the single-prompt invariants.
pub fn validate_task_prompt(raw: TaskPrompt) -> Result<TaskPrompt, ValidationError> {
    if raw.task_definition.trim().is_empty() {
        return Err(ValidationError::EmptyTaskDefinition);
    }
    if raw.key_features.iter().all(|f| f.trim().is_empty()) {
        return Err(ValidationError::EmptyKeyFeatures);
    }
    Ok(raw)
}

/// Batch validation: every prompt valid and ids unique.
pub fn validate_dataset(raw: Vec<TaskPrompt>) -> Result<Vec<TaskPrompt>, ValidationError> {
    let mut seen = HashSet::new();
    raw.into_iter()
        .map(|p| {
            let p = validate_task_prompt(p)?;
            if !seen.insert(p.id.clone()) {
                return Err(ValidationError::DuplicateId(p.id));
            }
            Ok(p)
        })
        .collect()
}

/// Reasoning tier, ordered from the most abstract to the most concrete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Strategic,
    Tactical,
    Operational,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Strategic, Dimension::Tactical, Dimension::Operational];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Strategic => "strategic",
            Dimension::Tactical => "tactical",
            Dimension::Operational => "operational",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strategic" => Ok(Dimension::Strategic),
            "tactical" => Ok(Dimension::Tactical),
            "operational" => Ok(Dimension::Operational),
            other => Err(format!("unknown dimension `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleRationale {
    pub module_name: String,
    pub responsibility: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRationale {
    pub function_name: String,
    pub responsibility: String,
    pub parent_module: String,
}

/// Rejects duplicate module names within one project's rationale set.
pub fn validate_module_rationales(modules: &[ModuleRationale]) -> Result<(), ValidationError> {
    let mut seen = HashSet::new();
    for m in modules {
        if m.module_name.trim().is_empty() {
            return Err(ValidationError::EmptyField("module_name"));
        }
        if !seen.insert(m.module_name.as_str()) {
            return Err(ValidationError::DuplicateModule(m.module_name.clone()));
        }
    }
    Ok(())
}

/// Checks (parent, name) uniqueness and that every parent resolves.
pub fn validate_function_rationales(
    modules: &[ModuleRationale],
    functions: &[FunctionRationale],
) -> Result<(), ValidationError> {
    let names: HashSet<&str> = modules.iter().map(|m| m.module_name.as_str()).collect();
    let mut seen = HashSet::new();
    for f in functions {
        if !names.contains(f.parent_module.as_str()) {
            return Err(ValidationError::UnknownParentModule {
                module: f.parent_module.clone(),
                function: f.function_name.clone(),
            });
        }
        if !seen.insert((f.parent_module.as_str(), f.function_name.as_str())) {
            return Err(ValidationError::DuplicateFunction {
                module: f.parent_module.clone(),
                function: f.function_name.clone(),
            });
        }
    }
    Ok(())
}

/// Replaces characters that cannot appear in a single path component.
///
/// Spaces and punctuation such as parentheses are kept so module directories
/// read like their rationale names ("Command-Line Interface (CLI)").
pub fn sanitize_path_component(name: &str) -> String {
    let cleaned: String = name
        .trim()
        .chars()
        .map(|c| match c {
            '/' | '\\' | ':' | '*' | '?' | '"' | '<' | '>' | '|' => '_',
            c if c.is_control() => '_',
            c => c,
        })
        .collect();
    match cleaned.as_str() {
        "" => "_".to_string(),
        "." | ".." => cleaned.replace('.', "_"),
        _ => cleaned,
    }
}

/// File name for a generated function: sanitized name plus extension.
pub fn function_file_name(function_name: &str, extension: &str) -> String {
    let base = sanitize_path_component(function_name);
    let ext = extension.trim_start_matches('.');
    if ext.is_empty() {
        base
    } else {
        format!("{base}.{ext}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedFunction {
    pub rationale: FunctionRationale,
    pub source: String,
    pub file_name: String,
    pub revision: u32,
}

impl GeneratedFunction {
    pub fn new(rationale: FunctionRationale, source: String, extension: &str) -> Self {
        let file_name = function_file_name(&rationale.function_name, extension);
        Self { rationale, source, file_name, revision: 0 }
    }

    /// Unit identifier used in conflict reports and trace events.
    pub fn unit_id(&self) -> String {
        unit_id(&self.rationale.parent_module, &self.file_name)
    }

    /// New version carrying revised source with the revision bumped.
    pub fn revised(&self, source: String) -> Self {
        Self { source, revision: self.revision + 1, ..self.clone() }
    }
}

pub fn unit_id(module: &str, file_name: &str) -> String {
    format!("{}/{}", sanitize_path_component(module), file_name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleNode {
    pub name: String,
    pub functions: Vec<GeneratedFunction>,
    #[serde(default)]
    pub merged_source: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectTree {
    pub modules: Vec<ModuleNode>,
}

impl ProjectTree {
    pub fn is_empty(&self) -> bool {
        self.modules.iter().all(|m| m.functions.is_empty())
    }

    pub fn function_count(&self) -> usize {
        self.modules.iter().map(|m| m.functions.len()).sum()
    }

    pub fn functions(&self) -> impl Iterator<Item = &GeneratedFunction> {
        self.modules.iter().flat_map(|m| m.functions.iter())
    }

    pub fn find_unit(&self, id: &str) -> Option<&GeneratedFunction> {
        self.functions().find(|f| f.unit_id() == id)
    }

    /// Containment and uniqueness invariants.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut modules = HashSet::new();
        for m in &self.modules {
            if !modules.insert(m.name.as_str()) {
                return Err(ValidationError::DuplicateModule(m.name.clone()));
            }
            let mut files = HashSet::new();
            for f in &m.functions {
                if f.rationale.parent_module != m.name {
                    return Err(ValidationError::UnknownParentModule {
                        module: f.rationale.parent_module.clone(),
                        function: f.rationale.function_name.clone(),
                    });
                }
                if !files.insert(f.file_name.as_str()) {
                    return Err(ValidationError::DuplicateFunction {
                        module: m.name.clone(),
                        function: f.rationale.function_name.clone(),
                    });
                }
                if f.source.trim().is_empty() {
                    return Err(ValidationError::EmptyField("source"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConflictScope {
    ModuleLevel,
    ProjectLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictKind {
    DependencyMismatch,
    LogicalInconsistency,
    ReturnTypeDiscrepancy,
    DuplicateDefinition,
    UnresolvedReference,
}

impl std::str::FromStr for ConflictKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match key.as_str() {
            "dependencymismatch" => ConflictKind::DependencyMismatch,
            "logicalinconsistency" => ConflictKind::LogicalInconsistency,
            "returntypediscrepancy" => ConflictKind::ReturnTypeDiscrepancy,
            "duplicatedefinition" => ConflictKind::DuplicateDefinition,
            "unresolvedreference" => ConflictKind::UnresolvedReference,
            _ => return Err(format!("unknown conflict kind `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub scope: ConflictScope,
    pub conflict_set: Vec<String>,
    pub affected_set: Vec<String>,
    pub kinds: Vec<ConflictKind>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionWeightState {
    pub dimension: Dimension,
    pub w_current: f64,
    pub w_min: f64,
    pub impact: f64,
    pub freq: u32,
    pub alpha: f64,
    pub beta: f64,
}

impl DimensionWeightState {
    /// Fresh state with verification certain (w = 1) and no rectifications.
    pub fn new(dimension: Dimension, w_min: f64, impact: f64, alpha: f64, beta: f64) -> Self {
        Self { dimension, w_current: 1.0, w_min, impact, freq: 0, alpha, beta }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.w_current) || !unit(self.w_min) {
            return Err(format!("weights must lie in [0,1] ({self:?})"));
        }
        if self.w_current < self.w_min {
            return Err(format!("w_current {} below w_min {}", self.w_current, self.w_min));
        }
        if self.impact.is_nan() || self.impact < 0.0 {
            return Err("impact must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err("alpha must lie in [0,1)".into());
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err("beta must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    /// `None` when the verifier's reply held no usable score.
    pub score: Option<f64>,
    pub passed: bool,
    pub raw_response: String,
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn valid_prompt_is_returned_unchanged() {
        let p = fixtures::project_management_task();
        assert_eq!(validate_task_prompt(p.clone()).unwrap(), p);
        assert_eq!(p.key_features.len(), 12);
    }

    #[test]
    fn empty_definition_rejected() {
        let mut p = fixtures::project_management_task();
        p.task_definition = String::new();
        assert_eq!(validate_task_prompt(p), Err(ValidationError::EmptyTaskDefinition));
    }

    #[test]
    fn empty_features_rejected() {
        let mut p = fixtures::project_management_task();
        p.key_features.clear();
        assert_eq!(validate_task_prompt(p), Err(ValidationError::EmptyKeyFeatures));
    }

    #[test]
    fn duplicate_ids_rejected_in_batch() {
        let p = fixtures::project_management_task();
        let err = validate_dataset(vec![p.clone(), p]).unwrap_err();
        assert_eq!(err, ValidationError::DuplicateId("tool-pms-001".into()));
    }

    #[test]
    fn dimensions_are_ordered() {
        assert!(Dimension::Strategic < Dimension::Tactical);
        assert!(Dimension::Tactical < Dimension::Operational);
        assert_eq!(Dimension::ALL.len(), 3);
    }

    #[test]
    fn file_names_follow_function_names() {
        assert_eq!(function_file_name("checkPermission", "py"), "checkPermission.py");
        assert_eq!(function_file_name("a/b:c", ".py"), "a_b_c.py");
        assert_eq!(sanitize_path_component("Command-Line Interface (CLI)"), "Command-Line Interface (CLI)");
        assert_eq!(sanitize_path_component(".."), "__");
    }

    #[test]
    fn duplicate_module_names_rejected() {
        let m = |n: &str, i| ModuleRationale { module_name: n.into(), responsibility: "r".into(), index: i };
        assert!(validate_module_rationales(&[m("A", 0), m("B", 1)]).is_ok());
        assert_eq!(
            validate_module_rationales(&[m("A", 0), m("A", 1)]),
            Err(ValidationError::DuplicateModule("A".into()))
        );
    }

    #[test]
    fn function_parent_must_resolve() {
        let modules = vec![ModuleRationale { module_name: "A".into(), responsibility: "r".into(), index: 0 }];
        let f = |p: &str, n: &str| FunctionRationale {
            function_name: n.into(),
            responsibility: "x".into(),
            parent_module: p.into(),
        };
        assert!(validate_function_rationales(&modules, &[f("A", "x"), f("A", "y")]).is_ok());
        assert!(matches!(
            validate_function_rationales(&modules, &[f("B", "x")]),
            Err(ValidationError::UnknownParentModule { .. })
        ));
        assert!(matches!(
            validate_function_rationales(&modules, &[f("A", "x"), f("A", "x")]),
            Err(ValidationError::DuplicateFunction { .. })
        ));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 _()\\-\"\n]{1,24}"
    }

    fn arb_function() -> impl Strategy<Value = GeneratedFunction> {
        (arb_text(), arb_text(), arb_text(), arb_text(), 0u32..5).prop_map(|(n, r, p, s, rev)| {
            let mut f = GeneratedFunction::new(
                FunctionRationale { function_name: n, responsibility: r, parent_module: p },
                s,
                "py",
            );
            f.revision = rev;
            f
        })
    }

    proptest! {
        #[test]
        fn domain_types_round_trip(
            funcs in proptest::collection::vec(arb_function(), 0..4),
            name in arb_text(),
            merged in proptest::option::of(arb_text()),
            w in 0.0f64..1.0, alpha in 0.0f64..0.99, freq in 0u32..9,
        ) {
            let tree = ProjectTree { modules: vec![ModuleNode { name, functions: funcs, merged_source: merged }] };
            let json = serde_json::to_string(&tree).unwrap();
            prop_assert_eq!(serde_json::from_str::<ProjectTree>(&json).unwrap(), tree);

            let state = DimensionWeightState { dimension: Dimension::Tactical, w_current: w, w_min: 0.0, impact: 2.0, freq, alpha, beta: 1.2 };
            let json = serde_json::to_string(&state).unwrap();
            prop_assert_eq!(serde_json::from_str::<DimensionWeightState>(&json).unwrap(), state);

            let report = ConflictReport {
                scope: ConflictScope::ProjectLevel,
                conflict_set: vec!["a".into()],
                affected_set: vec!["b".into()],
                kinds: vec![ConflictKind::UnresolvedReference],
                description: "d".into(),
            };
            let json = serde_json::to_string(&report).unwrap();
            prop_assert_eq!(serde_json::from_str::<ConflictReport>(&json).unwrap(), report);
        }
    }

    #[test]
    fn task_prompt_json_uses_snake_case_fields() {
        let p = fixtures::project_management_task();
        let v = serde_json::to_value(&p).unwrap();
        for key in ["id", "category", "task_definition", "key_features", "technical_specifications"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["category"], "Tool");
        let back: TaskPrompt = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
