mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};

use clap::{Args, Parser, Subcommand};
use srlcg_core::assemble::{creation_timestamp, write_project, Manifest, MANIFEST_FILE, TRACE_FILE};
use srlcg_core::eval::{code_length, judge_all, round_half_up, EvalReport, REPORT_FILE};
use srlcg_core::model::{validate_task_prompt, Dimension, TaskPrompt};
use srlcg_core::pipeline::{run_pipeline_with, PipelineFailure, PipelineOutput, RunConfig};
use srlcg_core::prompt::TemplateCatalog;
use srlcg_core::provider::{ChatProvider, ChatRequest, ChatResponse, HttpProvider, MockProvider, ProviderError, ProviderProfile};
use srlcg_core::trace::{CallCounts, EventKind, RunTrace, TraceLog};

use config::{apply_sweep, FileConfig, RunFlags, SweepParam};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl CliError {
    fn runtime(stage: &str, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{stage}: {err}"))
    }
}

#[derive(Parser)]
#[command(name = "srlcg", version, about = "Generate whole projects from one task prompt")]
struct Cli {
    /// JSON config file [default: ./srlcg.json when present]
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a project from a task prompt
    Generate(GenerateArgs),
    /// Measure a generated project and optionally score it with a judge
    Evaluate(EvaluateArgs),
    /// Rerun a scripted generation for each value of one parameter and print call counts as CSV
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TaskArgs {
    /// Task prompt as a JSON object, or a JSONL dataset
    #[arg(long)]
    task: Option<PathBuf>,
    /// Record to use when --task is a dataset with several entries
    #[arg(long)]
    task_id: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Output directory [default: out/<task id>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Answer model calls from a JSONL script instead of a hosted provider
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Directory of template overrides
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Replace files written by an earlier run in --out
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    project: Option<PathBuf>,
    #[command(flatten)]
    task: TaskArgs,
    /// Hosted judge: openai or deepseek
    #[arg(long)]
    judge_provider: Option<String>,
    #[arg(long)]
    judge_model: Option<String>,
    /// Scripted judge replies; enables scoring without a hosted provider
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: Option<SweepParam>,
    /// Comma-separated values
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    values: Option<Vec<f64>>,
    /// Restrict wmin or impact to one dimension [default: all three]
    #[arg(long)]
    dimension: Option<Dimension>,
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    run: RunFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Generate(a) => cmd_generate(a, file),
        Command::Evaluate(a) => cmd_evaluate(a, file),
        Command::Sweep(a) => cmd_sweep(a, file),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_task(path: &Path, id: Option<&str>) -> Result<TaskPrompt, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::runtime("task", format!("{}: {e}", path.display())))?;
    if let Ok(raw) = serde_json::from_str::<TaskPrompt>(&text) {
        let task = validate_task_prompt(raw).map_err(|e| CliError::runtime("task", e))?;
        return match id {
            Some(want) if want != task.id => Err(CliError::runtime("task", format!("no task `{want}` in {}", path.display()))),
            _ => Ok(task),
        };
    }
    let mut tasks = srlcg_core::eval::parse_dataset(&text).map_err(|e| CliError::runtime("task", e))?;
    match id {
        Some(want) => tasks
            .into_iter()
            .find(|t| t.id == want)
            .ok_or_else(|| CliError::runtime("task", format!("no task `{want}` in {}", path.display()))),
        None if tasks.len() == 1 => Ok(tasks.remove(0)),
        None => Err(CliError::Usage(format!("{} holds {} tasks; pick one with --task-id", path.display(), tasks.len()))),
    }
}

fn resolve_task(args: &TaskArgs, file: &FileConfig) -> Result<Option<TaskPrompt>, CliError> {
    let Some(path) = args.task.as_ref().or(file.task.as_ref()) else {
        return Ok(None);
    };
    let id = args.task_id.as_deref().or(file.task_id.as_deref());
    load_task(path, id).map(Some)
}

fn catalog(dir: Option<&Path>) -> Result<TemplateCatalog, CliError> {
    match dir {
        Some(d) => TemplateCatalog::with_overrides(d).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(TemplateCatalog::builtin()),
    }
}

/// Scripted provider when a script is given, otherwise the named hosted one.
fn provider(name: &str, script: Option<&Path>) -> Result<Box<dyn ChatProvider>, CliError> {
    if let Some(path) = script {
        let mock = MockProvider::load_script(path)
            .map_err(|e| CliError::runtime("provider", format!("{}: {e}", path.display())))?;
        return Ok(Box::new(mock));
    }
    let profile = ProviderProfile::builtin(name).ok_or_else(|| {
        CliError::Usage(format!("unknown provider `{name}` (expected openai or deepseek, or pass --mock-script)"))
    })?;
    let http = HttpProvider::new(profile).map_err(|e| CliError::runtime("provider", e))?;
    Ok(Box::new(http))
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))
}

/// Names the step a failed run stopped in, from the last traced event.
fn failed_stage(trace: &RunTrace) -> String {
    match trace.events.iter().rev().find(|e| e.kind != EventKind::Error) {
        Some(e) if matches!(e.kind, EventKind::ConflictDetect | EventKind::ConflictResolve) => "backtracking".into(),
        Some(e) => match e.dimension {
            Some(d) => format!("{} dimension", d.as_str()),
            None => "pipeline".into(),
        },
        None => "strategic dimension".into(),
    }
}

fn counts_summary(c: &CallCounts) -> String {
    format!(
        "generation={} verification={} rectification={} conflict_detect={} conflict_resolve={} total={}",
        c.generation,
        c.verification,
        c.rectification,
        c.conflict_detect,
        c.conflict_resolve,
        c.total()
    )
}

fn is_occupied(dir: &Path) -> bool {
    fs::read_dir(dir).is_ok_and(|mut entries| entries.any(|e| e.is_ok_and(|e| e.file_name() != TRACE_FILE)))
}

fn cmd_generate(args: GenerateArgs, file: FileConfig) -> Result<(), CliError> {
    let task = resolve_task(&args.task, &file)?.ok_or_else(|| CliError::Usage("--task is required".into()))?;
    let mut cfg = file.run.clone();
    args.run.apply(&mut cfg);
    let script = args.mock_script.or(file.mock_script);
    if script.is_some() {
        cfg.provider = "mock".into();
    }
    validate(&cfg)?;
    let catalog = catalog(args.templates.as_deref().or(file.templates.as_deref()))?;
    let provider = provider(&cfg.provider, script.as_deref())?;
    let force = args.force || file.force;

    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("out").join(&task.id));
    if !force && is_occupied(&out) {
        return Err(CliError::runtime("write", format!("target directory {} is not empty (use --force)", out.display())));
    }
    fs::create_dir_all(&out).map_err(|e| CliError::runtime("write", format!("{}: {e}", out.display())))?;
    let trace = TraceLog::to_file(out.join(TRACE_FILE)).map_err(|e| CliError::runtime("trace", e))?;

    let session = cfg.session(provider.as_ref(), catalog, trace);
    let output: PipelineOutput = run_pipeline_with(&task, &cfg, session)
        .map_err(|PipelineFailure { error, trace }| CliError::runtime(&failed_stage(&trace), error))?;
    if !output.converged {
        eprintln!("warning: integration did not converge after {} passes", cfg.max_backtrack_iterations);
    }

    let counts = output.trace.call_counts();
    let config_json = serde_json::to_value(&cfg).expect("config serializes");
    let manifest = write_project(&output.tree, &out, &task.id, config_json, counts, force)
        .map_err(|e| CliError::runtime("write", e))?;

    println!("{}", out.join(MANIFEST_FILE).display());
    let mut line = format!(
        "modules={} functions={} bytes={} {}",
        output.tree.modules.len(),
        output.tree.function_count(),
        manifest.total_bytes(),
        counts_summary(&counts)
    );
    if let Some(t) = output.iterations {
        let _ = write!(line, " iterations={t} converged={}", output.converged);
    }
    println!("{line}");
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, file: FileConfig) -> Result<(), CliError> {
    let project = args.project.or(file.project.clone()).ok_or_else(|| CliError::Usage("--project is required".into()))?;
    if !project.is_dir() {
        return Err(CliError::runtime("evaluate", format!("project directory {} not found", project.display())));
    }
    let length = code_length(&project).map_err(|e| CliError::runtime("evaluate", e))?;
    let project_id = Manifest::load(project.join(MANIFEST_FILE))
        .map(|m| m.project_id)
        .unwrap_or_else(|_| project.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());

    let script = args.mock_script.or(file.mock_script.clone());
    let judge_provider = args.judge_provider.or(file.judge_provider.clone());
    let mut report = EvalReport {
        project_id,
        code_length: length,
        scores: None,
        weighted_sum: None,
        judge_model: None,
        timestamp: creation_timestamp(),
    };

    if script.is_some() || judge_provider.is_some() {
        let task = resolve_task(&args.task, &file)?.ok_or_else(|| CliError::Usage("judging needs --task".into()))?;
        let name = judge_provider.unwrap_or_else(|| file.run.provider.clone());
        let provider = provider(&name, script.as_deref())?;
        let mut cfg = file.run.clone();
        cfg.model = args.judge_model.or(file.judge_model.clone()).or(cfg.model);
        let catalog = catalog(args.templates.as_deref().or(file.templates.as_deref()))?;
        let session = cfg.session(provider.as_ref(), catalog, TraceLog::in_memory());
        let (scores, warnings) = judge_all(&session, &project, &task).map_err(|e| CliError::runtime("judge", e))?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        report.weighted_sum = Some(scores.weighted_sum);
        report.scores = Some(scores);
        report.judge_model = Some(match (&script, &cfg.model) {
            (Some(_), _) => "mock".into(),
            (None, Some(m)) => m.clone(),
            (None, None) => ProviderProfile::builtin(&name).map(|p| p.model).unwrap_or(name),
        });
    }

    let path = project.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::runtime("evaluate", format!("{}: {e}", path.display())))?;

    println!("{}", path.display());
    let mut line = format!("code_length={length}");
    if let Some(s) = &report.scores {
        let _ = write!(
            line,
            " completeness={} correctness={} usability={} robustness={} weighted_sum={}",
            round_half_up(s.completeness, 1),
            round_half_up(s.correctness, 1),
            round_half_up(s.usability, 1),
            round_half_up(s.robustness, 1),
            round_half_up(s.weighted_sum, 2)
        );
    }
    println!("{line}");
    Ok(())
}

/// Counts reported tokens so a sweep row can carry a cost proxy.
struct Metered<'a> {
    inner: &'a dyn ChatProvider,
    tokens: AtomicU64,
}

impl ChatProvider for Metered<'_> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let resp = self.inner.complete(request)?;
        self.tokens.fetch_add(resp.usage.prompt_tokens + resp.usage.completion_tokens, Ordering::Relaxed);
        Ok(resp)
    }
}

fn cmd_sweep(args: SweepArgs, file: FileConfig) -> Result<(), CliError> {
    let param = args.param.or(file.param).ok_or_else(|| CliError::Usage("--param is required".into()))?;
    let values = args.values.or(file.values.clone()).filter(|v| !v.is_empty());
    let values = values.ok_or_else(|| CliError::Usage("--values is required".into()))?;
    let dimension = match (args.dimension, &file.dimension) {
        (Some(d), _) => Some(d),
        (None, Some(s)) => Some(s.parse::<Dimension>().map_err(CliError::Usage)?),
        (None, None) => None,
    };
    let script = args.mock_script.or(file.mock_script.clone()).ok_or_else(|| CliError::Usage("--mock-script is required".into()))?;
    let task = resolve_task(&args.task, &file)?.ok_or_else(|| CliError::Usage("--task is required".into()))?;
    let catalog = catalog(args.templates.as_deref().or(file.templates.as_deref()))?;

    let mut base = file.run.clone();
    args.run.apply(&mut base);
    base.provider = "mock".into();
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            apply_sweep(&mut cfg, param, v, dimension);
            validate(&cfg).map(|()| cfg)
        })
        .collect::<Result<_, _>>()?;

    let mut csv = String::from("param_value,verification_calls,rectification_calls,total_calls,proxy_cost\n");
    for (value, cfg) in values.iter().zip(&configs) {
        let mock = MockProvider::load_script(&script)
            .map_err(|e| CliError::runtime("provider", format!("{}: {e}", script.display())))?;
        let metered = Metered { inner: &mock, tokens: AtomicU64::new(0) };
        let session = cfg.session(&metered, catalog.clone(), TraceLog::in_memory());
        let output = run_pipeline_with(&task, cfg, session).map_err(|PipelineFailure { error, trace }| {
            CliError::runtime(&format!("{}={value}: {}", param.name(), failed_stage(&trace)), error)
        })?;
        let c = output.trace.call_counts();
        let _ = writeln!(
            csv,
            "{value},{},{},{},{}",
            c.verification,
            c.rectification,
            c.total(),
            metered.tokens.load(Ordering::Relaxed)
        );
    }

    match args.csv.or(file.csv.clone()) {
        Some(path) => {
            fs::write(&path, &csv).map_err(|e| CliError::runtime("sweep", format!("{}: {e}", path.display())))?;
            println!("{}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
