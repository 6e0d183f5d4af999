use std::path::PathBuf;

use clap::Args;
use serde_json::Value;

use crate::config::{read_json, Global, RunConfig};
use crate::error::{CliError, Result};
use crate::output::TOOL_VERSION;

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// JSON run record (uses its config_echo) or bare config.
    pub file: PathBuf,
    /// Replay a record written by another tool version.
    #[arg(long)]
    pub allow_version_mismatch: bool,
}

pub fn load(args: &ReplayArgs, global: &Global) -> Result<RunConfig> {
    if global.config.is_some() {
        return Err(CliError::input(
            "replay reads its configuration from FILE; drop --config",
        ));
    }
    let name = args.file.display();
    // JSON-lines outputs end with the record; take the last line that parses.
    let text = std::fs::read_to_string(&args.file).map_err(|e| CliError::input(format!("cannot read {name}: {e}")))?;
    let value: Value = match text.lines().rev().find_map(|l| serde_json::from_str::<Value>(l).ok()) {
        Some(v) if v.is_object() => v,
        _ => read_json(&args.file)?,
    };
    let (config, version) = match value.get("config_echo") {
        Some(echo) => (echo.clone(), value.get("tool_version").and_then(Value::as_str)),
        None => (value.clone(), None),
    };
    if let Some(v) = version.filter(|v| *v != TOOL_VERSION) {
        if !args.allow_version_mismatch {
            return Err(CliError::input(format!(
                "{name} was written by modsensor {v}, this is {TOOL_VERSION}; pass --allow-version-mismatch to replay anyway"
            )));
        }
        log::warn!("replaying a record from modsensor {v} with {TOOL_VERSION}");
    }
    let mut cfg: RunConfig =
        serde_json::from_value(config).map_err(|e| CliError::input(format!("{name}: not a run config: {e}")))?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if global.format.is_some() {
        cfg.format = global.format;
    }
    Ok(cfg)
}
