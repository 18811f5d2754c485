//! Run provenance: every command writes a `run.json` capturing its fully
//! resolved arguments, and `replay` re-executes one to byte-identical
//! outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::Command;

pub const RECORD_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct RunRecord {
    pub version: u32,
    pub command: Command,
}

/// run.json lives inside directory outputs and next to file outputs.
pub fn record_path(out: &Path) -> PathBuf {
    if out.extension().is_none() || out.is_dir() {
        out.join("run.json")
    } else {
        out.with_extension("run.json")
    }
}

pub fn write(out: &Path, command: &Command) -> anyhow::Result<()> {
    let record = RunRecord {
        version: RECORD_VERSION,
        command: serde_json::from_value(serde_json::to_value(command)?)?,
    };
    let path = record_path(out);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, serde_json::to_string_pretty(&record)?)?;
    Ok(())
}

pub fn load(path: &Path) -> anyhow::Result<Command> {
    let text = std::fs::read_to_string(path)?;
    let record: RunRecord = serde_json::from_str(&text)?;
    if record.version > RECORD_VERSION {
        anyhow::bail!(
            "run record version {} is newer than this build supports ({})",
            record.version,
            RECORD_VERSION
        );
    }
    Ok(record.command)
}
