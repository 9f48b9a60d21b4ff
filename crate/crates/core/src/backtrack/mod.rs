//! Stack-based module- and project-level conflict detection and
//! model-assisted resolution, iterated until the project is consistent.

pub mod analysis;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConflictKind, ConflictReport, ConflictScope, ModuleNode, ProjectTree};
use crate::prompt::{bind, extract_code, extract_first_json, TemplateId};
use crate::session::{sha256_hex, Session};
use crate::trace::{EventKind, Payload};

use analysis::{normalize_name, summarize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrateConfig {
    pub max_iterations: u32,
    /// Ask the model for semantic conflicts after the static checks.
    pub llm_detection: bool,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        Self { max_iterations: 3, llm_detection: false }
    }
}

/// Work records of one integration run.
#[derive(Debug, Clone, Default)]
pub struct IntegrationState {
    pub function_stack: Vec<ModuleNode>,
    pub module_stack: Vec<Vec<ModuleNode>>,
    pub t: u32,
    pub max_iterations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub tree: ProjectTree,
    pub iterations: u32,
    pub converged: bool,
    pub resolutions: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum Scope<'a> {
    Module(&'a ModuleNode),
    Project(&'a ProjectTree),
}

impl Scope<'_> {
    fn label(&self) -> String {
        match self {
            Scope::Module(m) => format!("module {}", m.name),
            Scope::Project(_) => "project".to_string(),
        }
    }

    fn conflict_scope(&self) -> ConflictScope {
        match self {
            Scope::Module(_) => ConflictScope::ModuleLevel,
            Scope::Project(_) => ConflictScope::ProjectLevel,
        }
    }

    fn modules(&self) -> Vec<&ModuleNode> {
        match self {
            Scope::Module(m) => vec![*m],
            Scope::Project(p) => p.modules.iter().collect(),
        }
    }
}

fn comment_prefix(file_name: &str) -> &'static str {
    let ext = file_name.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase()).unwrap_or_default();
    match ext.as_str() {
        "py" | "rb" | "sh" | "pl" | "r" | "jl" | "yaml" | "yml" | "toml" => "#",
        "sql" | "lua" | "hs" => "--",
        _ => "//",
    }
}

/// Header comment plus function sources in rationale order, one blank line apart.
pub fn merge_module(node: &ModuleNode) -> String {
    let prefix = node.functions.first().map(|f| comment_prefix(&f.file_name)).unwrap_or("#");
    let mut out = format!("{prefix} Module: {}\n", node.name);
    for f in &node.functions {
        out.push('\n');
        out.push_str(f.source.trim_end());
        out.push('\n');
    }
    out
}

fn push_finding(kinds: &mut Vec<ConflictKind>, kind: ConflictKind) {
    if !kinds.contains(&kind) {
        kinds.push(kind);
    }
}

fn push_unit(set: &mut Vec<String>, id: String) {
    if !set.contains(&id) {
        set.push(id);
    }
}

/// Duplicate outermost definitions and definition/rationale name mismatches.
fn static_module(node: &ModuleNode) -> Option<ConflictReport> {
    let mut report = ConflictReport {
        scope: ConflictScope::ModuleLevel,
        conflict_set: Vec::new(),
        affected_set: Vec::new(),
        kinds: Vec::new(),
        description: String::new(),
    };
    let mut notes = Vec::new();
    let summaries: Vec<_> = node.functions.iter().map(|f| summarize(&f.source)).collect();

    let mut owners: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in summaries.iter().enumerate() {
        for name in &s.top_level {
            owners.entry(name.as_str()).or_default().push(i);
        }
    }
    for (name, idx) in &owners {
        if idx.len() < 2 {
            continue;
        }
        push_finding(&mut report.kinds, ConflictKind::DuplicateDefinition);
        let ids: Vec<String> = idx.iter().map(|&i| node.functions[i].unit_id()).collect();
        for id in &ids {
            push_unit(&mut report.conflict_set, id.clone());
        }
        // the first definer keeps the name
        for &i in &idx[1..] {
            if i != idx[0] {
                push_unit(&mut report.affected_set, node.functions[i].unit_id());
            }
        }
        if idx.iter().all(|&i| i == idx[0]) {
            push_unit(&mut report.affected_set, node.functions[idx[0]].unit_id());
        }
        let mut uniq = ids.clone();
        uniq.dedup();
        notes.push(format!("`{name}` is defined more than once ({})", uniq.join(", ")));
    }

    for (f, s) in node.functions.iter().zip(&summaries) {
        if s.top_level.is_empty() {
            continue;
        }
        let want = normalize_name(&f.rationale.function_name);
        if s.top_level.iter().any(|d| normalize_name(d) == want) {
            continue;
        }
        push_finding(&mut report.kinds, ConflictKind::DependencyMismatch);
        push_unit(&mut report.conflict_set, f.unit_id());
        push_unit(&mut report.affected_set, f.unit_id());
        notes.push(format!(
            "{} defines {} but its rationale names `{}`",
            f.unit_id(),
            s.top_level.iter().map(|d| format!("`{d}`")).collect::<Vec<_>>().join(", "),
            f.rationale.function_name
        ));
    }

    if report.conflict_set.is_empty() {
        return None;
    }
    report.description = notes.join("; ");
    Some(report)
}

/// Calls that resolve to no definition anywhere in the project.
fn static_project(tree: &ProjectTree) -> Option<ConflictReport> {
    let summaries: Vec<_> = tree.functions().map(|f| (f, summarize(&f.source))).collect();
    let defs: BTreeSet<String> = summaries.iter().flat_map(|(_, s)| s.defined.iter().cloned()).collect();
    let mut units = Vec::new();
    let mut notes = Vec::new();
    for (f, s) in &summaries {
        let missing = s.unresolved(&defs);
        if !missing.is_empty() {
            units.push(f.unit_id());
            notes.push(format!("{} calls undefined {}", f.unit_id(), missing.join(", ")));
        }
    }
    if units.is_empty() {
        return None;
    }
    Some(ConflictReport {
        scope: ConflictScope::ProjectLevel,
        conflict_set: units.clone(),
        affected_set: units,
        kinds: vec![ConflictKind::UnresolvedReference],
        description: notes.join("; "),
    })
}

/// Deterministic text checks; `None` when the scope is clean.
pub fn detect_conflicts_static(scope: Scope<'_>) -> Option<ConflictReport> {
    match scope {
        Scope::Module(m) => static_module(m),
        Scope::Project(p) => static_project(p),
    }
}

/// Both static tiers over a whole project, module reports first.
pub fn detect_all_static(tree: &ProjectTree) -> Vec<ConflictReport> {
    tree.modules.iter().filter_map(static_module).chain(static_project(tree)).collect()
}

fn unit_listing(modules: &[&ModuleNode]) -> (String, String) {
    let mut rationales = Vec::new();
    let mut sources = Vec::new();
    for m in modules {
        for f in &m.functions {
            rationales.push(format!("- {}: {}", f.unit_id(), f.rationale.responsibility));
            sources.push(format!("File: {}\n```\n{}\n```", f.unit_id(), f.source.trim_end()));
        }
    }
    (rationales.join("\n"), sources.join("\n\n"))
}

#[derive(Deserialize)]
struct DetectReply {
    #[serde(default)]
    conflicts: Vec<String>,
    #[serde(default)]
    affected: Vec<String>,
    #[serde(default)]
    kinds: Vec<String>,
    #[serde(default)]
    description: String,
}

fn resolve_id(tree_ids: &[String], raw: &str) -> Option<String> {
    let raw = raw.trim().trim_matches(['`', '"', '\'']);
    if let Some(id) = tree_ids.iter().find(|id| *id == raw) {
        return Some(id.clone());
    }
    let by_file: Vec<_> = tree_ids.iter().filter(|id| id.rsplit('/').next() == Some(raw)).collect();
    if by_file.len() == 1 {
        return Some(by_file[0].clone());
    }
    let stem: Vec<_> = tree_ids
        .iter()
        .filter(|id| id.rsplit('/').next().and_then(|f| f.rsplit_once('.')).map(|(s, _)| s) == Some(raw))
        .collect();
    (stem.len() == 1).then(|| stem[0].clone())
}

fn parse_detect_reply(text: &str, scope: Scope<'_>) -> std::result::Result<Option<ConflictReport>, String> {
    let Some(value) = extract_first_json(text) else {
        return Err("conflict detection reply held no JSON; treated as no conflict".into());
    };
    let reply: DetectReply =
        serde_json::from_value(value).map_err(|e| format!("conflict detection reply has unexpected shape: {e}"))?;
    let ids: Vec<String> = scope.modules().iter().flat_map(|m| m.functions.iter().map(|f| f.unit_id())).collect();
    let mut conflict_set = Vec::new();
    for c in &reply.conflicts {
        if let Some(id) = resolve_id(&ids, c) {
            push_unit(&mut conflict_set, id);
        }
    }
    if conflict_set.is_empty() {
        if reply.conflicts.is_empty() {
            return Ok(None);
        }
        return Err(format!("conflict units {:?} are not in scope; ignored", reply.conflicts));
    }
    let mut affected_set = Vec::new();
    for a in &reply.affected {
        if let Some(id) = resolve_id(&ids, a) {
            push_unit(&mut affected_set, id);
        }
    }
    if affected_set.is_empty() {
        affected_set = conflict_set.clone();
    }
    let mut kinds = Vec::new();
    for k in &reply.kinds {
        if let Ok(kind) = k.parse() {
            push_finding(&mut kinds, kind);
        }
    }
    if kinds.is_empty() {
        kinds.push(ConflictKind::LogicalInconsistency);
    }
    Ok(Some(ConflictReport {
        scope: scope.conflict_scope(),
        conflict_set,
        affected_set,
        kinds,
        description: reply.description,
    }))
}

/// Asks the model for conflicts in `scope`. Replies without JSON count as
/// no conflict and leave a warning in the trace.
pub fn detect_conflicts_llm(
    session: &mut Session<'_>,
    scope: Scope<'_>,
    iteration: u32,
) -> Result<Option<ConflictReport>> {
    let (rationales, sources) = unit_listing(&scope.modules());
    let label = scope.label();
    let prompt = session.catalog.render(
        TemplateId::ConflictDetect,
        &bind([("scope", label.as_str()), ("rationales", rationales.as_str()), ("sources", sources.as_str())]),
    )?;
    let outcome = session.complete(&prompt);
    let parsed = outcome.as_ref().map(|r| parse_detect_reply(&r.content, scope));
    let (report, message) = match parsed {
        Ok(Ok(r)) => (r, None),
        Ok(Err(warning)) => (None, Some(warning)),
        Err(_) => (None, None),
    };
    let mut payload = detect_payload(report.as_ref(), iteration, "llm");
    payload.message = message;
    session.record_call(EventKind::ConflictDetect, None, &label, &prompt, outcome, payload)?;
    Ok(report)
}

fn detect_payload(report: Option<&ConflictReport>, iteration: u32, method: &str) -> Payload {
    let mut p = Payload { iteration: Some(iteration), method: Some(method.to_string()), ..Payload::default() };
    if let Some(r) = report {
        p.conflict_set = r.conflict_set.clone();
        p.affected_set = r.affected_set.clone();
        p.kinds = r.kinds.clone();
        p.message = Some(r.description.clone());
    }
    p
}

static FILE_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:[*#>]+[ \t]*)?File:[ \t]*(.+?)[ \t]*\**[ \t]*$").unwrap());

/// `File: <name>` headers, each followed by the code that precedes the next header.
fn parse_revisions(text: &str) -> Vec<(String, String)> {
    let heads: Vec<_> = FILE_HEADER.captures_iter(text).map(|c| (c.get(0).unwrap(), c[1].to_string())).collect();
    let mut out = Vec::new();
    for (i, (m, name)) in heads.iter().enumerate() {
        let end = heads.get(i + 1).map(|h| h.0.start()).unwrap_or(text.len());
        let body = &text[m.end()..end];
        if !body.contains("```") {
            continue;
        }
        if let Ok(code) = extract_code(body) {
            out.push((name.trim_matches(['`', '"', '\'', '*']).trim().to_string(), code));
        }
    }
    out
}

/// Asks the model to revise the affected units and applies the revisions,
/// bumping each revised unit's revision once. Returns the revised unit ids.
pub fn resolve(
    session: &mut Session<'_>,
    conflict: &ConflictReport,
    tree: &mut ProjectTree,
    iteration: u32,
) -> Result<Vec<String>> {
    if conflict.conflict_set.is_empty() || conflict.affected_set.is_empty() {
        return Err(Error::EmptyConflict);
    }
    let mut affected_sources = Vec::new();
    let mut file_list = Vec::new();
    let mut before = BTreeMap::new();
    for id in &conflict.affected_set {
        let f = tree.find_unit(id).ok_or_else(|| Error::MissingRevision(id.clone()))?;
        affected_sources.push(format!("File: {id}\n```\n{}\n```", f.source.trim_end()));
        file_list.push(id.clone());
        before.insert(id.clone(), sha256_hex(&f.source));
    }
    let conflict_units = conflict.conflict_set.join("\n");
    let affected_sources = affected_sources.join("\n\n");
    let file_list = file_list.join(", ");
    let prompt = session.catalog.render(
        TemplateId::ConflictResolve,
        &bind([
            ("description", conflict.description.as_str()),
            ("conflict_units", conflict_units.as_str()),
            ("affected_sources", affected_sources.as_str()),
            ("file_list", file_list.as_str()),
        ]),
    )?;
    let outcome = session.complete(&prompt);

    let all_ids: Vec<String> = conflict.affected_set.clone();
    let mut revisions: BTreeMap<String, String> = BTreeMap::new();
    if let Ok(resp) = &outcome {
        for (name, code) in parse_revisions(&resp.content) {
            if let Some(id) = resolve_id(&all_ids, &name) {
                revisions.entry(id).or_insert(code);
            }
        }
    }
    let missing = conflict.affected_set.iter().find(|id| !revisions.contains_key(*id)).cloned();
    let after: BTreeMap<String, String> = revisions.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect();
    let payload = Payload {
        iteration: Some(iteration),
        kinds: conflict.kinds.clone(),
        conflict_set: conflict.conflict_set.clone(),
        affected_set: conflict.affected_set.clone(),
        before,
        after,
        message: missing.as_ref().map(|m| format!("no revision returned for {m}")),
        ..Payload::default()
    };
    let unit = conflict.conflict_set[0].clone();
    session.record_call(EventKind::ConflictResolve, None, &unit, &prompt, outcome, payload)?;
    if let Some(m) = missing {
        return Err(Error::MissingRevision(m));
    }

    let mut revised = Vec::new();
    for module in &mut tree.modules {
        for f in &mut module.functions {
            let id = f.unit_id();
            if let Some(code) = revisions.remove(&id) {
                *f = f.revised(code);
                revised.push(id);
            }
        }
    }
    Ok(revised)
}

fn record_static(session: &mut Session<'_>, scope: &str, report: Option<&ConflictReport>, iteration: u32) -> Result<()> {
    let payload = detect_payload(report, iteration, "static");
    session.trace.record(EventKind::ConflictDetect, None, Some(scope.to_string()), payload)?;
    Ok(())
}

fn detect(session: &mut Session<'_>, scope: Scope<'_>, config: &IntegrateConfig, t: u32) -> Result<Option<ConflictReport>> {
    let label = scope.label();
    let report = detect_conflicts_static(scope);
    record_static(session, &label, report.as_ref(), t)?;
    if report.is_some() || !config.llm_detection {
        return Ok(report);
    }
    detect_conflicts_llm(session, scope, t)
}

fn remerge_touched(tree: &mut ProjectTree, touched: &[String]) {
    for m in &mut tree.modules {
        if m.functions.iter().any(|f| touched.contains(&f.unit_id())) {
            m.merged_source = Some(merge_module(m));
        }
    }
}

/// Detect/resolve passes over every module and then the whole project until
/// a pass finds nothing or `max_iterations` passes have run.
pub fn integrate(session: &mut Session<'_>, mut tree: ProjectTree, config: &IntegrateConfig) -> Result<Integration> {
    if config.max_iterations == 0 {
        return Err(Error::Config("max_iterations must be at least 1".into()));
    }
    let mut state = IntegrationState { max_iterations: config.max_iterations, ..IntegrationState::default() };
    let mut resolutions = 0;
    loop {
        state.t += 1;
        let t = state.t;
        let mut found = false;

        for i in 0..tree.modules.len() {
            let merged = merge_module(&tree.modules[i]);
            tree.modules[i].merged_source = Some(merged);
            state.function_stack.push(tree.modules[i].clone());
            if let Some(report) = detect(session, Scope::Module(&tree.modules[i]), config, t)? {
                found = true;
                let touched = resolve(session, &report, &mut tree, t)?;
                resolutions += 1;
                remerge_touched(&mut tree, &touched);
            }
        }
        state.module_stack.push(tree.modules.clone());

        if let Some(report) = detect(session, Scope::Project(&tree), config, t)? {
            found = true;
            let touched = resolve(session, &report, &mut tree, t)?;
            resolutions += 1;
            remerge_touched(&mut tree, &touched);
        }

        // the stacks only record the pass in flight
        state.function_stack.clear();
        state.module_stack.clear();

        if !found {
            return Ok(Integration { tree, iterations: t, converged: true, resolutions });
        }
        if t >= state.max_iterations {
            let payload = Payload {
                iteration: Some(t),
                non_convergence: true,
                message: Some(format!("conflicts remain after {t} integration passes")),
                ..Payload::default()
            };
            session.trace.record(EventKind::Error, None, None, payload)?;
            return Ok(Integration { tree, iterations: t, converged: false, resolutions });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FunctionRationale, GeneratedFunction};
    use crate::provider::MockProvider;
    use crate::trace::TraceLog;

    fn func(module: &str, name: &str, source: &str) -> GeneratedFunction {
        GeneratedFunction::new(
            FunctionRationale {
                function_name: name.into(),
                responsibility: format!("does {name}"),
                parent_module: module.into(),
            },
            source.into(),
            "py",
        )
    }

    fn module(name: &str, funcs: Vec<GeneratedFunction>) -> ModuleNode {
        ModuleNode { name: name.into(), functions: funcs, merged_source: None }
    }

    fn clean_tree() -> ProjectTree {
        ProjectTree {
            modules: vec![
                module(
                    "Auth",
                    vec![
                        func("Auth", "checkPermission", "def check_permission(role):\n    return role == 'admin'\n"),
                        func("Auth", "denyAccess", "def deny_access(role):\n    if not check_permission(role):\n        raise PermissionError(role)\n"),
                    ],
                ),
                module("Cli", vec![func("Cli", "run", "def run(role):\n    deny_access(role)\n    print('ok')\n")]),
            ],
        }
    }

    #[test]
    fn duplicate_definition_is_flagged() {
        let m = module(
            "Auth",
            vec![
                func("Auth", "check_permission", "def check_permission():\n    pass\n"),
                func("Auth", "checkPermission", "def check_permission():\n    return True\n"),
            ],
        );
        let r = detect_conflicts_static(Scope::Module(&m)).unwrap();
        assert_eq!(r.kinds, vec![ConflictKind::DuplicateDefinition]);
        assert_eq!(r.conflict_set, vec!["Auth/check_permission.py", "Auth/checkPermission.py"]);
        assert_eq!(r.affected_set, vec!["Auth/checkPermission.py"]);
    }

    #[test]
    fn rationale_name_mismatch_is_flagged() {
        let m = module("Auth", vec![func("Auth", "checkPermission", "def grant():\n    pass\n")]);
        let r = detect_conflicts_static(Scope::Module(&m)).unwrap();
        assert_eq!(r.kinds, vec![ConflictKind::DependencyMismatch]);
    }

    #[test]
    fn unresolved_reference_across_project() {
        let mut tree = clean_tree();
        tree.modules[1].functions[0] = func("Cli", "run", "def run(args):\n    return handle_register_user(args)\n");
        let r = detect_conflicts_static(Scope::Project(&tree)).unwrap();
        assert_eq!(r.kinds, vec![ConflictKind::UnresolvedReference]);
        assert_eq!(r.conflict_set, vec!["Cli/run.py"]);
        tree.modules[1].functions.push(func("Cli", "handleRegisterUser", "def handle_register_user(args):\n    pass\n"));
        assert!(detect_conflicts_static(Scope::Project(&tree)).is_none());
    }

    #[test]
    fn case_study_cli_module() {
        let exec = include_str!("../../fixtures/case_study/Command-Line Interface (CLI)/executeCommand.py");
        let handle = include_str!("../../fixtures/case_study/Command-Line Interface (CLI)/handleInput.py");
        let m = "Command-Line Interface (CLI)";
        let node = module(m, vec![func(m, "handleInput", handle), func(m, "executeCommand", exec)]);
        let r = detect_conflicts_static(Scope::Module(&node)).unwrap();
        assert_eq!(r.kinds, vec![ConflictKind::DuplicateDefinition]);
        assert!(r.description.contains("handle_input"));
        let tree = ProjectTree { modules: vec![node] };
        let r = detect_conflicts_static(Scope::Project(&tree)).unwrap();
        assert_eq!(r.conflict_set, vec![format!("{m}/handleInput.py")]);
        assert!(r.description.contains("add_task"));
    }

    #[test]
    fn single_function_is_clean() {
        let m = module("Auth", vec![func("Auth", "checkPermission", "def check_permission(r):\n    return bool(r)\n")]);
        assert!(detect_conflicts_static(Scope::Module(&m)).is_none());
        assert!(detect_all_static(&ProjectTree { modules: vec![m] }).is_empty());
    }

    #[test]
    fn merge_keeps_rationale_order() {
        let check = include_str!("../../fixtures/case_study/Authorization and Access Control/checkPermission.py");
        let deny = include_str!("../../fixtures/case_study/Authorization and Access Control/denyUnauthorizedAccess.py");
        let m = "Authorization and Access Control";
        let node = module(m, vec![func(m, "checkPermission", check), func(m, "denyUnauthorizedAccess", deny)]);
        let merged = merge_module(&node);
        assert!(merged.starts_with("# Module: Authorization and Access Control\n\n"));
        let a = merged.find("def check_permission").unwrap();
        let b = merged.find("def deny_unauthorized_access").unwrap();
        assert!(a < b);
        assert!(merged.contains("return True\n\n    def deny_unauthorized_access"));
        assert_eq!(merge_module(&node), merged);
        let single = module(m, vec![func(m, "checkPermission", check)]);
        assert_eq!(merge_module(&single), format!("# Module: {m}\n\n{}\n", check.trim_end()));
    }

    #[test]
    fn llm_detection_reports_and_tolerates_prose() {
        let tree = clean_tree();
        let mock = MockProvider::queue([
            r#"{"conflicts":["Auth/checkPermission.py"],"affected":["denyAccess.py"],"kinds":["LogicalInconsistency"],"description":"roles disagree"}"#,
            r#"{"conflicts":[]}"#,
            "Looks fine to me.",
        ]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let r = detect_conflicts_llm(&mut s, Scope::Project(&tree), 1).unwrap().unwrap();
        assert_eq!(r.conflict_set, vec!["Auth/checkPermission.py"]);
        assert_eq!(r.affected_set, vec!["Auth/denyAccess.py"]);
        assert_eq!(r.kinds, vec![ConflictKind::LogicalInconsistency]);
        assert!(detect_conflicts_llm(&mut s, Scope::Project(&tree), 1).unwrap().is_none());
        assert!(detect_conflicts_llm(&mut s, Scope::Project(&tree), 1).unwrap().is_none());
        let trace = s.trace.into_trace();
        assert_eq!(trace.call_counts().conflict_detect, 3);
        assert!(trace.events[2].payload.message.as_deref().unwrap().contains("no JSON"));
    }

    fn report(ids: &[&str]) -> ConflictReport {
        ConflictReport {
            scope: ConflictScope::ModuleLevel,
            conflict_set: ids.iter().map(|s| s.to_string()).collect(),
            affected_set: ids.iter().map(|s| s.to_string()).collect(),
            kinds: vec![ConflictKind::LogicalInconsistency],
            description: "x".into(),
        }
    }

    #[test]
    fn resolve_revises_only_affected() {
        let mut tree = clean_tree();
        let untouched = tree.modules[1].functions[0].clone();
        let mock = MockProvider::queue(["File: Auth/denyAccess.py\n```python\ndef deny_access(role):\n    return None\n```\n"]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let revised = resolve(&mut s, &report(&["Auth/denyAccess.py"]), &mut tree, 1).unwrap();
        assert_eq!(revised, vec!["Auth/denyAccess.py"]);
        let f = tree.find_unit("Auth/denyAccess.py").unwrap();
        assert_eq!(f.revision, 1);
        assert_eq!(f.source, "def deny_access(role):\n    return None");
        assert_eq!(tree.modules[1].functions[0], untouched);
        let ev = s.trace.trace().of_kind(EventKind::ConflictResolve).next().unwrap().clone();
        assert_ne!(ev.payload.before["Auth/denyAccess.py"], ev.payload.after["Auth/denyAccess.py"]);
    }

    #[test]
    fn resolve_requires_every_affected_file() {
        let mut tree = clean_tree();
        let mock = MockProvider::queue(["File: Auth/denyAccess.py\n```\ndef deny_access(role):\n    pass\n```"]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let err = resolve(&mut s, &report(&["Auth/denyAccess.py", "Cli/run.py"]), &mut tree, 1).unwrap_err();
        assert!(matches!(err, Error::MissingRevision(id) if id == "Cli/run.py"));
        assert_eq!(tree, clean_tree());
        assert!(matches!(resolve(&mut s, &report(&[]), &mut tree, 1), Err(Error::EmptyConflict)));
    }

    #[test]
    fn clean_project_converges_in_one_pass() {
        let mock = MockProvider::queue(Vec::<String>::new());
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let out = integrate(&mut s, clean_tree(), &IntegrateConfig::default()).unwrap();
        assert_eq!((out.iterations, out.converged, out.resolutions), (1, true, 0));
        assert!(out.tree.modules.iter().all(|m| m.merged_source.is_some()));
        assert_eq!(mock.call_count(), 0);
    }

    #[test]
    fn one_conflict_converges_on_second_pass() {
        let mut tree = clean_tree();
        tree.modules[1].functions[0] = func("Cli", "run", "def run(role):\n    launch(role)\n");
        let mock = MockProvider::queue(["File: Cli/run.py\n```\ndef run(role):\n    deny_access(role)\n```"]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let out = integrate(&mut s, tree, &IntegrateConfig::default()).unwrap();
        assert_eq!((out.iterations, out.converged, out.resolutions), (2, true, 1));
        assert!(detect_all_static(&out.tree).is_empty());
        assert_eq!(out.tree.find_unit("Cli/run.py").unwrap().revision, 1);
        assert!(out.tree.modules[1].merged_source.as_deref().unwrap().contains("deny_access(role)"));
        assert_eq!(s.trace.trace().count(EventKind::ConflictResolve), 1);
    }

    #[test]
    fn stubborn_conflict_stops_at_bound() {
        let mut tree = clean_tree();
        tree.modules[1].functions[0] = func("Cli", "run", "def run(role):\n    launch(role)\n");
        let mut mock_lines = Vec::new();
        for _ in 0..3 {
            mock_lines.push("File: Cli/run.py\n```\ndef run(role):\n    launch(role)\n```".to_string());
        }
        let mock = MockProvider::queue(mock_lines);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let out = integrate(&mut s, tree, &IntegrateConfig::default()).unwrap();
        assert_eq!((out.iterations, out.converged, out.resolutions), (3, false, 3));
        let trace = s.trace.into_trace();
        assert!(trace.of_kind(EventKind::Error).any(|e| e.payload.non_convergence));
        assert_eq!(out.tree.find_unit("Cli/run.py").unwrap().revision, 3);
    }

    #[test]
    fn llm_tier_runs_when_static_is_clean() {
        let mock = MockProvider::queue([r#"{"conflicts":[]}"#; 3]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let cfg = IntegrateConfig { llm_detection: true, ..IntegrateConfig::default() };
        let out = integrate(&mut s, clean_tree(), &cfg).unwrap();
        assert!(out.converged);
        assert_eq!(mock.call_count(), 3);
    }
}
