//! Config file loading and flag precedence.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use srlcg_core::model::Dimension;
use srlcg_core::pipeline::RunConfig;
use srlcg_core::rectify::DimensionParams;

use crate::CliError;

pub const DEFAULT_CONFIG: &str = "srlcg.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    Beta,
    Wmin,
    Impact,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::Wmin => "wmin",
            SweepParam::Impact => "impact",
        }
    }
}

/// Everything a config file may set. Pipeline settings sit at the top level
/// next to the command-specific keys.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    pub task: Option<PathBuf>,
    pub task_id: Option<String>,
    pub out: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub force: bool,
    pub project: Option<PathBuf>,
    pub judge_provider: Option<String>,
    pub judge_model: Option<String>,
    pub param: Option<SweepParam>,
    pub values: Option<Vec<f64>>,
    pub dimension: Option<String>,
    pub csv: Option<PathBuf>,
}

impl FileConfig {
    /// Reads `explicit`, or `./srlcg.json` when it exists, or falls back to
    /// defaults. Relative paths inside the file resolve against its directory.
    pub fn load(explicit: Option<&Path>) -> Result<Self, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = PathBuf::from(DEFAULT_CONFIG);
                if !p.is_file() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [
            &mut cfg.task,
            &mut cfg.out,
            &mut cfg.mock_script,
            &mut cfg.templates,
            &mut cfg.project,
            &mut cfg.csv,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Pipeline flags shared by `generate` and `sweep`. Each one overrides the
/// matching config key when given.
#[derive(Debug, Default, Clone, Args)]
pub struct RunFlags {
    /// Hosted provider profile: openai or deepseek
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Sampling temperature [default: 0.3]
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Seed for the verification gate
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_backtracking: bool,
    #[arg(long)]
    pub no_rectification: bool,
    /// Always verify, never lower the weights
    #[arg(long)]
    pub no_attenuation: bool,
    /// Verification pass score [default: 0.8]
    #[arg(long)]
    pub pass_threshold: Option<f64>,
    /// [default: 3]
    #[arg(long)]
    pub max_rectify_retries: Option<u32>,
    /// Integration passes before giving up [default: 3]
    #[arg(long)]
    pub max_iterations: Option<u32>,
    /// Concurrent operational calls [default: 1]
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Ask the model for conflicts in addition to the static checks
    #[arg(long)]
    pub llm_conflict_detection: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Language named in the code generation prompt [default: Python]
    #[arg(long)]
    pub language: Option<String>,
    /// Extension of generated files [default: py]
    #[arg(long)]
    pub extension: Option<String>,
}

impl RunFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.provider {
            cfg.provider = v.clone();
        }
        if let Some(v) = &self.model {
            cfg.model = Some(v.clone());
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.max_tokens {
            cfg.max_tokens = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.no_backtracking {
            cfg.backtracking = false;
        }
        if self.no_rectification {
            cfg.rectification = false;
        }
        if self.no_attenuation {
            cfg.attenuation = false;
        }
        if let Some(v) = self.pass_threshold {
            cfg.pass_threshold = v;
        }
        if let Some(v) = self.max_rectify_retries {
            cfg.max_rectify_retries = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.max_backtrack_iterations = v;
        }
        if let Some(v) = self.parallelism {
            cfg.parallelism = v;
        }
        if self.llm_conflict_detection {
            cfg.llm_conflict_detection = true;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = &self.language {
            cfg.language = v.clone();
        }
        if let Some(v) = &self.extension {
            cfg.extension = v.trim_start_matches('.').to_string();
        }
    }
}

pub fn params_mut(cfg: &mut RunConfig, dimension: Dimension) -> &mut DimensionParams {
    match dimension {
        Dimension::Strategic => &mut cfg.strategic,
        Dimension::Tactical => &mut cfg.tactical,
        Dimension::Operational => &mut cfg.operational,
    }
}

/// Applies one sweep value. Per-dimension parameters go to `dimension`, or
/// to all three when none is named.
pub fn apply_sweep(cfg: &mut RunConfig, param: SweepParam, value: f64, dimension: Option<Dimension>) {
    let dims = match dimension {
        Some(d) => vec![d],
        None => vec![Dimension::Strategic, Dimension::Tactical, Dimension::Operational],
    };
    match param {
        SweepParam::Alpha => cfg.alpha = value,
        SweepParam::Beta => cfg.beta = value,
        SweepParam::Wmin => dims.into_iter().for_each(|d| params_mut(cfg, d).w_min = value),
        SweepParam::Impact => dims.into_iter().for_each(|d| params_mut(cfg, d).impact = value),
    }
}
