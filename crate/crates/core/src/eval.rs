//! Project metrics: code length, judge-scored completeness sub-metrics and
//! their aggregation, plus dataset loading.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::assemble::{MANIFEST_FILE, TRACE_FILE};
use crate::error::{Error, Result};
use crate::model::{validate_task_prompt, TaskPrompt, ValidationError};
use crate::prompt::{bind, parse_score_in_range, Metric, TemplateId};
use crate::session::Session;

pub const REPORT_FILE: &str = "evaluation.json";

fn is_bookkeeping(rel: &Path) -> bool {
    rel.components().count() == 1
        && rel.to_str().is_some_and(|name| [MANIFEST_FILE, TRACE_FILE, REPORT_FILE].contains(&name))
}

/// Code files under `dir` in path order, as (relative path, absolute path).
pub fn code_files(dir: impl AsRef<Path>) -> Result<Vec<(String, PathBuf)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "project directory not found")));
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("walk stays under root");
        if is_bookkeeping(rel) {
            continue;
        }
        let rel_str = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.push((rel_str, entry.path().to_path_buf()));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Total bytes of the project's code files.
pub fn code_length(dir: impl AsRef<Path>) -> Result<u64> {
    let mut total = 0;
    for (_, path) in code_files(dir)? {
        total += fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
    }
    Ok(total)
}

/// Mean code length across samples.
pub fn aggregate_lengths(samples: &[u64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    Ok(samples.iter().map(|&s| s as f64).sum::<f64>() / samples.len() as f64)
}

/// Equal-weight mean of the four sub-metric scores.
pub fn weighted_sum(scores: [f64; 4]) -> f64 {
    scores.iter().sum::<f64>() / 4.0
}

/// Rounds half away from zero on the shortest decimal form of `x`, so
/// 95.475 becomes 95.5 and 90.05 becomes 90.1 at one decimal.
pub fn round_half_up(x: f64, decimals: usize) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let text = format!("{}", x.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    if frac_part.len() <= decimals {
        return x;
    }
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes().take(decimals)).map(|b| b - b'0').collect();
    if frac_part.as_bytes()[decimals] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - decimals;
    let mut s: String = digits[..split].iter().map(|d| char::from(b'0' + d)).collect();
    if decimals > 0 {
        s.push('.');
        s.extend(digits[split..].iter().map(|d| char::from(b'0' + d)));
    }
    let v: f64 = s.parse().expect("digits form a number");
    if x < 0.0 {
        -v
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub score: f64,
    pub scored_files: usize,
    pub warnings: Vec<String>,
}

/// Scores every code file for `metric` and averages the parseable scores.
pub fn judge(session: &Session<'_>, project_dir: impl AsRef<Path>, task: &TaskPrompt, metric: Metric) -> Result<JudgeOutcome> {
    let task_text = task.render();
    let mut scores = Vec::new();
    let mut warnings = Vec::new();
    for (rel, path) in code_files(project_dir)? {
        let code = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let prompt = session.catalog.render(
            TemplateId::Judge(metric),
            &bind([("task_prompt", task_text.as_str()), ("file_path", rel.as_str()), ("code", code.as_str())]),
        )?;
        let reply = session.complete(&prompt)?;
        match parse_score_in_range(&reply.content, 0.0, 100.0) {
            Ok(s) => scores.push(s),
            Err(e) => warnings.push(format!("{rel}: {} skipped ({e})", metric.as_str())),
        }
    }
    if scores.is_empty() {
        return Err(Error::AllFilesUnscored);
    }
    let score = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(JudgeOutcome { score, scored_files: scores.len(), warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub completeness: f64,
    pub correctness: f64,
    pub usability: f64,
    pub robustness: f64,
    pub weighted_sum: f64,
}

impl EvalScores {
    pub fn new(completeness: f64, correctness: f64, usability: f64, robustness: f64) -> Self {
        let weighted_sum = weighted_sum([completeness, correctness, usability, robustness]);
        Self { completeness, correctness, usability, robustness, weighted_sum }
    }
}

/// Runs the judge for all four sub-metrics.
pub fn judge_all(session: &Session<'_>, project_dir: &Path, task: &TaskPrompt) -> Result<(EvalScores, Vec<String>)> {
    let mut values = [0.0; 4];
    let mut warnings = Vec::new();
    for (slot, metric) in values.iter_mut().zip(Metric::ALL) {
        let out = judge(session, project_dir, task, metric)?;
        *slot = out.score;
        warnings.extend(out.warnings);
    }
    Ok((EvalScores::new(values[0], values[1], values[2], values[3]), warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub project_id: String,
    pub code_length: u64,
    pub scores: Option<EvalScores>,
    pub weighted_sum: Option<f64>,
    pub judge_model: Option<String>,
    pub timestamp: String,
}

/// Reads line-delimited task records and validates each one.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<TaskPrompt>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Vec<TaskPrompt>> {
    let mut out: Vec<TaskPrompt> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: TaskPrompt =
            serde_json::from_str(line).map_err(|e| Error::DatasetParse { line: line_no, message: e.to_string() })?;
        let task = validate_task_prompt(raw).map_err(|source| Error::DatasetInvalid { line: line_no, source })?;
        if out.iter().any(|t| t.id == task.id) {
            return Err(Error::DatasetInvalid { line: line_no, source: ValidationError::DuplicateId(task.id) });
        }
        out.push(task);
    }
    Ok(out)
}
