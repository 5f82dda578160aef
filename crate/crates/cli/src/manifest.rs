use std::path::Path;

use serde::{Deserialize, Serialize};
use wncs_core::config::Config;
use wncs_core::Result;

use crate::Command;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce the files of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: Option<u64>,
    /// Configuration as resolved at run time, so a replay does not depend
    /// on the original file.
    pub config: Option<Config>,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
