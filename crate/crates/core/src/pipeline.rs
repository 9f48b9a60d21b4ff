//! The three reasoning dimensions run end to end: task prompt to module
//! rationales, to function rationales, to generated functions, each step
//! wrapped by the self-rectification guard.

use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backtrack::{integrate, IntegrateConfig};
use crate::error::{Error, Result};
use crate::model::{
    function_file_name, unit_id, validate_function_rationales, Dimension, DimensionWeightState,
    FunctionRationale, GeneratedFunction, ModuleNode, ModuleRationale, ProjectTree, TaskPrompt,
};
use crate::prompt::{
    bind, extract_code, parse_function_rationales, parse_module_rationales, PromptError, TemplateCatalog, TemplateId,
};
use crate::provider::{ChatProvider, ChatResponse, ProviderError};
use crate::rectify::{DimensionParams, RectifyConfig, SelfRectifier};
use crate::session::Session;
use crate::trace::{RunTrace, TraceLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub provider: String,
    pub model: Option<String>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub parallelism: usize,
    pub seed: u64,
    pub backtracking: bool,
    pub rectification: bool,
    pub attenuation: bool,
    pub pass_threshold: f64,
    pub max_rectify_retries: u32,
    pub max_backtrack_iterations: u32,
    pub llm_conflict_detection: bool,
    pub alpha: f64,
    pub beta: f64,
    pub strategic: DimensionParams,
    pub tactical: DimensionParams,
    pub operational: DimensionParams,
    /// Language named in the operational prompt.
    pub language: String,
    /// Extension of generated source files.
    pub extension: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let r = RectifyConfig::default();
        Self {
            provider: "openai".into(),
            model: None,
            temperature: 0.3,
            max_tokens: None,
            parallelism: 1,
            seed: 0,
            backtracking: true,
            rectification: r.enabled,
            attenuation: r.attenuation,
            pass_threshold: r.pass_threshold,
            max_rectify_retries: r.max_retries,
            max_backtrack_iterations: IntegrateConfig::default().max_iterations,
            llm_conflict_detection: false,
            alpha: r.alpha,
            beta: r.beta,
            strategic: r.strategic,
            tactical: r.tactical,
            operational: r.operational,
            language: "Python".into(),
            extension: "py".into(),
        }
    }
}

impl RunConfig {
    pub fn rectify_config(&self) -> RectifyConfig {
        RectifyConfig {
            enabled: self.rectification,
            attenuation: self.attenuation,
            pass_threshold: self.pass_threshold,
            max_retries: self.max_rectify_retries,
            alpha: self.alpha,
            beta: self.beta,
            strategic: self.strategic,
            tactical: self.tactical,
            operational: self.operational,
        }
    }

    pub fn integrate_config(&self) -> IntegrateConfig {
        IntegrateConfig { max_iterations: self.max_backtrack_iterations, llm_detection: self.llm_conflict_detection }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.max_backtrack_iterations == 0 {
            return Err(Error::Config("max_backtrack_iterations must be at least 1".into()));
        }
        if self.extension.trim_start_matches('.').is_empty() {
            return Err(Error::Config("extension must not be empty".into()));
        }
        self.rectify_config().validate()
    }

    /// Session carrying this configuration's sampling settings.
    pub fn session<'p>(&self, provider: &'p dyn ChatProvider, catalog: TemplateCatalog, trace: TraceLog) -> Session<'p> {
        let mut s = Session::new(provider, trace);
        s.catalog = catalog;
        s.model = self.model.clone().unwrap_or_default();
        s.temperature = self.temperature;
        s.max_tokens = self.max_tokens;
        s
    }
}

/// Strategic dimension: the task prompt becomes module rationales.
pub fn decompose_strategic(
    session: &mut Session<'_>,
    rectifier: &mut SelfRectifier,
    task: &TaskPrompt,
) -> Result<Vec<ModuleRationale>> {
    let prompt = strategic_prompt(session, task)?;
    rectifier.guard(session, Dimension::Strategic, &task.id, &prompt, |t| {
        let modules = parse_module_rationales(t)?;
        first_repeat(modules.iter().map(|m| m.module_name.as_str())).map_or(Ok(modules), |i| Err(PromptError::SchemaMismatch(i)))
    })
}

// Index of the first name that repeats an earlier one.
fn first_repeat<S: AsRef<str>>(names: impl Iterator<Item = S>) -> Option<usize> {
    let mut seen = std::collections::HashSet::new();
    names.enumerate().find(|(_, n)| !seen.insert(n.as_ref().to_string())).map(|(i, _)| i)
}

fn strategic_prompt(session: &Session<'_>, task: &TaskPrompt) -> Result<String> {
    let rendered = task.render();
    Ok(session.catalog.render(TemplateId::Strategic, &bind([("task_prompt", rendered.as_str())]))?)
}

/// Tactical dimension: one module rationale becomes function rationales.
pub fn decompose_tactical(
    session: &mut Session<'_>,
    rectifier: &mut SelfRectifier,
    module: &ModuleRationale,
) -> Result<Vec<FunctionRationale>> {
    let framework = json!({ "Module": module.module_name, "Responsibility": module.responsibility });
    let framework = serde_json::to_string_pretty(&framework).expect("json value serializes");
    let prompt = session.catalog.render(TemplateId::Tactical, &bind([("module_rationale", framework.as_str())]))?;
    let parent = module.module_name.clone();
    let functions = rectifier.guard(session, Dimension::Tactical, &parent, &prompt, |t| {
        let functions = parse_function_rationales(t, &parent)?;
        let names = functions.iter().map(|f| function_file_name(&f.function_name, "").to_lowercase());
        match first_repeat(names) {
            Some(i) => Err(PromptError::SchemaMismatch(i)),
            None => Ok(functions),
        }
    })?;
    validate_function_rationales(std::slice::from_ref(module), &functions)?;
    Ok(functions)
}

fn operational_prompt(session: &Session<'_>, fr: &FunctionRationale, language: &str) -> Result<String> {
    let rationale = json!({
        "Module": fr.parent_module,
        "Function": fr.function_name,
        "Responsibility": fr.responsibility,
    });
    let rationale = serde_json::to_string_pretty(&rationale).expect("json value serializes");
    Ok(session.catalog.render(
        TemplateId::Operational,
        &bind([
            ("function_rationale", rationale.as_str()),
            ("language", language),
            ("TaskName", fr.function_name.as_str()),
            ("ModuleName", fr.parent_module.as_str()),
        ]),
    )?)
}

/// Operational dimension: one function rationale becomes source code.
pub fn generate_function(
    session: &mut Session<'_>,
    rectifier: &mut SelfRectifier,
    fr: &FunctionRationale,
    config: &RunConfig,
) -> Result<GeneratedFunction> {
    let prompt = operational_prompt(session, fr, &config.language)?;
    let outcome = session.complete(&prompt);
    finish_function(session, rectifier, fr, config, &prompt, outcome)
}

fn finish_function(
    session: &mut Session<'_>,
    rectifier: &mut SelfRectifier,
    fr: &FunctionRationale,
    config: &RunConfig,
    prompt: &str,
    outcome: Result<ChatResponse, ProviderError>,
) -> Result<GeneratedFunction> {
    let probe = GeneratedFunction::new(fr.clone(), String::new(), &config.extension);
    let unit = unit_id(&fr.parent_module, &probe.file_name);
    let source = rectifier.guard_output(session, Dimension::Operational, &unit, prompt, outcome, extract_code)?;
    Ok(GeneratedFunction { source, ..probe })
}

/// Generates every function, issuing up to `parallelism` generation calls at
/// once. Guards run afterwards in list order so gate draws stay in sequence.
fn generate_all(
    session: &mut Session<'_>,
    rectifier: &mut SelfRectifier,
    rationales: &[FunctionRationale],
    config: &RunConfig,
) -> Result<Vec<GeneratedFunction>> {
    let mut out = Vec::with_capacity(rationales.len());
    for batch in rationales.chunks(config.parallelism.max(1)) {
        let prompts = batch.iter().map(|fr| operational_prompt(session, fr, &config.language)).collect::<Result<Vec<_>>>()?;
        let outcomes: Vec<Result<ChatResponse, ProviderError>> = if batch.len() == 1 {
            vec![session.complete(&prompts[0])]
        } else {
            let shared: &Session<'_> = session;
            thread::scope(|scope| {
                let handles: Vec<_> = prompts.iter().map(|p| scope.spawn(move || shared.complete(p))).collect();
                handles.into_iter().map(|h| h.join().expect("generation worker panicked")).collect()
            })
        };
        for ((fr, prompt), outcome) in batch.iter().zip(&prompts).zip(outcomes) {
            out.push(finish_function(session, rectifier, fr, config, prompt, outcome)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub tree: ProjectTree,
    pub trace: RunTrace,
    /// Integration passes run, or `None` when backtracking is disabled.
    pub iterations: Option<u32>,
    pub converged: bool,
    pub weights: [DimensionWeightState; 3],
}

/// A failed run together with everything traced up to the failure.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: Error,
    pub trace: RunTrace,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for PipelineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs with the built-in templates.
pub fn run_pipeline(
    task: &TaskPrompt,
    config: &RunConfig,
    provider: &dyn ChatProvider,
    trace: TraceLog,
) -> std::result::Result<PipelineOutput, PipelineFailure> {
    run_pipeline_with(task, config, config.session(provider, TemplateCatalog::builtin(), trace))
}

/// Strategic once, tactical per module, operational per function, then
/// integration unless disabled. Any error aborts the run.
pub fn run_pipeline_with(
    task: &TaskPrompt,
    config: &RunConfig,
    mut session: Session<'_>,
) -> std::result::Result<PipelineOutput, PipelineFailure> {
    let mut rectifier = SelfRectifier::new(config.rectify_config(), config.seed);
    let result = run_steps(task, config, &mut session, &mut rectifier);
    let weights = rectifier.states().clone();
    let trace = session.trace.into_trace();
    match result {
        Ok((tree, iterations, converged)) => Ok(PipelineOutput { tree, trace, iterations, converged, weights }),
        Err(error) => Err(PipelineFailure { error, trace }),
    }
}

fn run_steps(
    task: &TaskPrompt,
    config: &RunConfig,
    session: &mut Session<'_>,
    rectifier: &mut SelfRectifier,
) -> Result<(ProjectTree, Option<u32>, bool)> {
    config.validate()?;
    let modules = decompose_strategic(session, rectifier, task)?;

    let mut per_module = Vec::with_capacity(modules.len());
    for m in &modules {
        per_module.push(decompose_tactical(session, rectifier, m)?);
    }

    let all: Vec<FunctionRationale> = per_module.iter().flatten().cloned().collect();
    let mut generated = generate_all(session, rectifier, &all, config)?.into_iter();

    let mut tree = ProjectTree::default();
    for (m, functions) in modules.iter().zip(&per_module) {
        tree.modules.push(ModuleNode {
            name: m.module_name.clone(),
            functions: generated.by_ref().take(functions.len()).collect(),
            merged_source: None,
        });
    }
    tree.validate()?;
    if tree.is_empty() {
        return Err(Error::EmptyProject);
    }

    if !config.backtracking {
        return Ok((tree, None, true));
    }
    let integration = integrate(session, tree, &config.integrate_config())?;
    Ok((integration.tree, Some(integration.iterations), integration.converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::project_management_task;
    use crate::provider::{MockProvider, MockRecord};
    use crate::trace::EventKind;

    const STRATEGIC_PLACEHOLDERS: &str = include_str!("../fixtures/golden/strategic_example.json");
    const STRATEGIC_FILLED: &str = r#"[
    {
        "Module": "User Management",
        "Responsibility": "Register users, authenticate them and manage their roles"
    },
    {
        "Module": "Authorization and Access Control",
        "Responsibility": "Check permissions and deny unauthorized access"
    },
    {
        "Module": "Command-Line Interface (CLI)",
        "Responsibility": "Interpret user input and execute commands"
    }
]"#;
    const OPERATIONAL_EXAMPLE: &str = include_str!("../fixtures/golden/operational_example.py");

    fn no_gate() -> RunConfig {
        RunConfig { rectification: false, ..RunConfig::default() }
    }

    fn tactical_reply(module: &str, funcs: &[&str]) -> String {
        let subs: Vec<_> = funcs.iter().map(|f| json!({"Function": f, "Responsibility": format!("{f} role")})).collect();
        json!({"Modules": [{"Module": module, "SubFunctions": subs}]}).to_string()
    }

    fn module(name: &str) -> ModuleRationale {
        ModuleRationale { module_name: name.into(), responsibility: "r".into(), index: 0 }
    }

    #[test]
    fn strategic_from_filled_example() {
        let mock = MockProvider::queue([STRATEGIC_FILLED]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let mut r = SelfRectifier::new(no_gate().rectify_config(), 0);
        let modules = decompose_strategic(&mut s, &mut r, &project_management_task()).unwrap();
        assert_eq!(modules.len(), 3);
        assert!(mock.prompts()[0].starts_with("Task Definition:\n\nTask Definition:"));
    }

    #[test]
    fn placeholder_names_are_rectified() {
        let mock = MockProvider::queue([STRATEGIC_PLACEHOLDERS, STRATEGIC_FILLED, "0.9"]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let mut r = SelfRectifier::new(RunConfig::default().rectify_config(), 0);
        let modules = decompose_strategic(&mut s, &mut r, &project_management_task()).unwrap();
        assert_eq!(modules[2].module_name, "Command-Line Interface (CLI)");
        let trace = s.trace.into_trace();
        assert_eq!(trace.count(EventKind::Rectify), 1);
    }

    #[test]
    fn strategic_recovers_after_rectification() {
        let mock = MockProvider::queue(["I think there are modules.", STRATEGIC_FILLED]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let mut cfg = RunConfig::default().rectify_config();
        cfg.strategic.w_min = 0.0;
        let mut r = SelfRectifier::new(cfg, 0);
        // with the gate closed, unparseable output is still rectified
        r.set_weight(Dimension::Strategic, 0.0);
        let modules = decompose_strategic(&mut s, &mut r, &project_management_task()).unwrap();
        assert_eq!(modules.len(), 3);
        assert_eq!(s.trace.trace().count(EventKind::Rectify), 1);
        assert_eq!(mock.call_count(), 2);
    }

    #[test]
    fn strategic_exhausts() {
        let mock = MockProvider::from_records(vec![MockRecord::plain("nothing useful").sticky()]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let mut r = SelfRectifier::new(RunConfig::default().rectify_config(), 0);
        let err = decompose_strategic(&mut s, &mut r, &project_management_task()).unwrap_err();
        assert!(matches!(err, Error::ExhaustedRectification { dimension: Dimension::Strategic, .. }));
    }

    #[test]
    fn tactical_case_study_functions() {
        let name = "Authorization and Access Control";
        let mock = MockProvider::queue([tactical_reply(name, &["checkPermission", "denyUnauthorizedAccess"])]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let mut r = SelfRectifier::new(no_gate().rectify_config(), 0);
        let fs = decompose_tactical(&mut s, &mut r, &module(name)).unwrap();
        let names: Vec<_> = fs.iter().map(|f| f.function_name.as_str()).collect();
        assert_eq!(names, ["checkPermission", "denyUnauthorizedAccess"]);
        assert!(mock.prompts()[0].contains(name));
    }

    #[test]
    fn tactical_order_and_empty() {
        let five = ["a", "b", "c", "d", "e"];
        let mock = MockProvider::queue([tactical_reply("M", &five), tactical_reply("M", &[])]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let mut r = SelfRectifier::new(no_gate().rectify_config(), 0);
        let fs = decompose_tactical(&mut s, &mut r, &module("M")).unwrap();
        assert_eq!(fs.iter().map(|f| f.function_name.as_str()).collect::<Vec<_>>(), five);
        let err = decompose_tactical(&mut s, &mut r, &module("M")).unwrap_err();
        assert!(matches!(err, Error::Prompt(PromptError::EmptyList)));
    }

    fn add_task() -> FunctionRationale {
        FunctionRationale {
            function_name: "AddTask".into(),
            responsibility: "Add a task".into(),
            parent_module: "Task Management".into(),
        }
    }

    #[test]
    fn operational_from_filled_example() {
        let mock = MockProvider::queue([format!("```python\n{OPERATIONAL_EXAMPLE}```")]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let mut r = SelfRectifier::new(no_gate().rectify_config(), 0);
        let f = generate_function(&mut s, &mut r, &add_task(), &no_gate()).unwrap();
        assert!(f.source.contains("def AddTask(description)"));
        assert_eq!((f.revision, f.file_name.as_str()), (0, "AddTask.py"));
        let p = &mock.prompts()[0];
        assert!(p.contains("Python code implementation for the AddTask sub-function in the Task Management module"));
    }

    #[test]
    fn operational_rectifies_empty_fence() {
        let mock = MockProvider::queue(["```\n```", "def AddTask(d):\n    return d\n", "0.9"]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let mut r = SelfRectifier::new(RunConfig::default().rectify_config(), 3);
        let f = generate_function(&mut s, &mut r, &add_task(), &RunConfig::default()).unwrap();
        assert_eq!(f.revision, 0);
        assert!(f.source.starts_with("def AddTask"));
        let mock = MockProvider::from_records(vec![MockRecord::plain("   ").sticky()]);
        let mut s = Session::new(&mock, TraceLog::in_memory());
        let err = generate_function(&mut s, &mut r, &add_task(), &RunConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ExhaustedRectification { dimension: Dimension::Operational, .. }));
    }

    fn two_by_two() -> Vec<String> {
        let strategic = r#"[{"Module":"Store","Responsibility":"persist"},{"Module":"Api","Responsibility":"serve"}]"#;
        vec![
            strategic.into(),
            tactical_reply("Store", &["save", "load"]),
            tactical_reply("Api", &["get", "put"]),
            "def save(x):\n    return x\n".into(),
            "def load():\n    return save(1)\n".into(),
            "def get():\n    return load()\n".into(),
            "def put(x):\n    return save(x)\n".into(),
        ]
    }

    #[test]
    fn call_accounting_without_gates() {
        let mock = MockProvider::queue(two_by_two());
        let out = run_pipeline(&project_management_task(), &no_gate(), &mock, TraceLog::in_memory()).unwrap();
        let c = out.trace.call_counts();
        assert_eq!(c.generation, 1 + 2 + 4);
        assert_eq!(c.verification, 0);
        assert_eq!(out.trace.count(EventKind::Verify), 0);
        assert_eq!(out.tree.function_count(), 4);
        assert_eq!(out.iterations, Some(1));
        assert!(out.tree.modules.iter().all(|m| m.merged_source.is_some()));
    }

    #[test]
    fn parallel_generation_matches_serial() {
        let strategic = r#"[{"Module":"Store","Responsibility":"persist"},{"Module":"Api","Responsibility":"serve"}]"#;
        let mut records = vec![
            MockRecord::matching("decompose the above task", strategic),
            MockRecord::matching("\"Store\"", tactical_reply("Store", &["save", "load"])),
            MockRecord::matching("\"Api\"", tactical_reply("Api", &["get", "put"])),
        ];
        for (name, source) in [
            ("save", "def save(x):\n    return x\n"),
            ("load", "def load():\n    return save(1)\n"),
            ("get", "def get():\n    return load()\n"),
            ("put", "def put(x):\n    return save(x)\n"),
        ] {
            records.push(MockRecord::matching(&format!("for the {name} sub-function"), source));
        }
        let run = |p: usize| {
            let mock = MockProvider::from_records(records.clone());
            let cfg = RunConfig { parallelism: p, ..no_gate() };
            run_pipeline(&project_management_task(), &cfg, &mock, TraceLog::in_memory()).unwrap()
        };
        let serial = run(1);
        let parallel = run(3);
        assert_eq!(serial.tree, parallel.tree);
        assert_eq!(serial.trace, parallel.trace);
    }

    #[test]
    fn empty_strategic_aborts_with_trace() {
        let mock = MockProvider::queue(["[]"]);
        let failure = run_pipeline(&project_management_task(), &no_gate(), &mock, TraceLog::in_memory()).unwrap_err();
        assert!(matches!(failure.error, Error::Prompt(PromptError::EmptyList)));
        assert_eq!(failure.trace.count(EventKind::Generate), 1);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let script: Vec<MockRecord> = two_by_two()
            .into_iter()
            .flat_map(|r| [MockRecord::plain(r), MockRecord::plain("0.95")])
            .collect();
        let run = || {
            let mock = MockProvider::from_records(script.clone());
            let cfg = RunConfig { seed: 11, ..RunConfig::default() };
            let out = run_pipeline(&project_management_task(), &cfg, &mock, TraceLog::in_memory()).unwrap();
            (out.tree, out.trace)
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.1.call_counts().verification, 7);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mock = MockProvider::queue(Vec::<String>::new());
        let cfg = RunConfig { parallelism: 0, ..RunConfig::default() };
        let failure = run_pipeline(&project_management_task(), &cfg, &mock, TraceLog::in_memory()).unwrap_err();
        assert!(matches!(failure.error, Error::Config(_)));
    }
}
