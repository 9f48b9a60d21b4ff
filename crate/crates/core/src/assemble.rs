//! Writes a generated project to disk with a manifest of every file.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sanitize_path_component, ProjectTree};
use crate::session::sha256_hex;
use crate::trace::{CallCounts, RunTrace, TraceError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const MERGED_STEM: &str = "ModuleMerged";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the project root, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub project_id: String,
    pub created_at: String,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub call_counts: CallCounts,
}

impl Manifest {
    pub fn total_bytes(&self) -> u64 {
        self.files.iter().map(|f| f.bytes).sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks that every listed file exists with the recorded size and digest.
    pub fn verify(&self, root: impl AsRef<Path>) -> Result<()> {
        for f in &self.files {
            let path = root.as_ref().join(&f.path);
            let data = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if data.len() as u64 != f.bytes || sha256_hex(&data) != f.sha256 {
                return Err(Error::Config(format!("{} does not match the manifest", f.path)));
            }
        }
        Ok(())
    }
}

/// UTC creation time, taken from `SOURCE_DATE_EPOCH` when set so repeated
/// runs can produce identical manifests.
pub fn creation_timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::from_timestamp(secs, 0));
    pinned.unwrap_or_else(Utc::now).to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn extension_of(file_name: &str) -> Option<&str> {
    file_name.rsplit_once('.').map(|(_, e)| e).filter(|e| !e.is_empty())
}

/// Relative paths and contents of every file the tree produces.
pub fn project_files(tree: &ProjectTree) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for m in &tree.modules {
        let dir = sanitize_path_component(&m.name);
        for f in &m.functions {
            out.push((format!("{dir}/{}", f.file_name), f.source.clone()));
        }
        if let Some(merged) = &m.merged_source {
            let ext = m.functions.first().and_then(|f| extension_of(&f.file_name));
            let name = match ext {
                Some(e) => format!("{MERGED_STEM}.{e}"),
                None => MERGED_STEM.to_string(),
            };
            out.push((format!("{dir}/{name}"), merged.clone()));
        }
    }
    out
}

fn ensure_writable(out_dir: &Path, force: bool) -> Result<()> {
    let entries = match fs::read_dir(out_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(out_dir, e)),
    };
    let occupied = entries.filter_map(|e| e.ok()).any(|e| e.file_name() != TRACE_FILE);
    if !occupied {
        return Ok(());
    }
    if !force {
        return Err(Error::NonEmptyTarget(out_dir.to_path_buf()));
    }
    // only files recorded by an earlier manifest are removed
    let previous = out_dir.join(MANIFEST_FILE);
    if let Ok(old) = Manifest::load(&previous) {
        for f in &old.files {
            let path = out_dir.join(&f.path);
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(path, e)),
            }
            if let Some(parent) = path.parent() {
                let _ = fs::remove_dir(parent);
            }
        }
    }
    Ok(())
}

/// Writes one directory per module, one file per function, merged module
/// files where present, and `manifest.json` at the root.
pub fn write_project(
    tree: &ProjectTree,
    out_dir: impl AsRef<Path>,
    project_id: &str,
    config: serde_json::Value,
    call_counts: CallCounts,
    force: bool,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    if tree.is_empty() {
        return Err(Error::EmptyProject);
    }
    tree.validate()?;
    ensure_writable(out_dir, force)?;

    let mut files = Vec::new();
    for (rel, content) in project_files(tree) {
        let path: PathBuf = out_dir.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, content.as_bytes()).map_err(|e| Error::io(&path, e))?;
        files.push(FileEntry { path: rel, bytes: content.len() as u64, sha256: sha256_hex(content.as_bytes()) });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));

    let manifest = Manifest { project_id: project_id.to_string(), created_at: creation_timestamp(), config, files, call_counts };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Persists an in-memory trace as JSON lines.
pub fn write_trace(trace: &RunTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for ev in &trace.events {
        text.push_str(&serde_json::to_string(ev).expect("trace events serialize"));
        text.push('\n');
    }
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::Trace(TraceError::Io(e)))
}
