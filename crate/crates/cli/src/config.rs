//! JSON run configuration with flag overrides.
//!
//! The file is command-scoped: `{"gen_data": {...}, "train": {...}}`. Flags
//! win over file values; unknown keys are rejected. A missing seed falls back
//! to the `LATEFIT_SEED` environment variable.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::commands::{
    BenchOpts, EmbedOpts, EvaluateOpts, GenDataOpts, ImportTeacherOpts, RankOpts, ScoreOpts,
    TrainOpts,
};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub gen_data: Option<GenDataOpts>,
    #[serde(default)]
    pub embed: Option<EmbedOpts>,
    #[serde(default)]
    pub train: Option<TrainOpts>,
    #[serde(default)]
    pub score: Option<ScoreOpts>,
    #[serde(default)]
    pub rank: Option<RankOpts>,
    #[serde(default)]
    pub evaluate: Option<EvaluateOpts>,
    #[serde(default)]
    pub bench: Option<BenchOpts>,
    #[serde(default)]
    pub import_teacher: Option<ImportTeacherOpts>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Seed precedence: explicit flag/config value, then LATEFIT_SEED, then 0.
pub fn resolve_seed(explicit: Option<u64>) -> u64 {
    if let Some(s) = explicit {
        return s;
    }
    if let Ok(v) = std::env::var("LATEFIT_SEED") {
        if let Ok(s) = v.parse() {
            return s;
        }
    }
    0
}

/// Merge helper: the flag value wins, then the config file value.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
