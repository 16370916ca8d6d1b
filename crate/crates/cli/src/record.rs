use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::Command;

/// Everything needed to repeat a run. Written as JSON beside the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub subcommand: String,
    pub version: String,
    pub argv: Vec<String>,
    pub jobs: usize,
    /// `--seed` as given on the command line.
    pub seed_override: Option<u64>,
    /// Seed actually used, for seeded subcommands.
    pub seed: Option<u64>,
    /// Config with every default filled in.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub summary: serde_json::Value,
    pub duration_s: f64,
    /// Parsed command with absolute paths.
    pub command: Command,
}

impl RunRecord {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading run record {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing run record {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing run record {}", path.display()))
    }
}
