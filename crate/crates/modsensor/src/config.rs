//! Run configuration: defaults, then a `--config` file, then explicit flags.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::values::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    State,
    Probgrid,
    Fisher,
    Qpe,
    Magnus,
    Force,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).ok();
        write!(f, "{}", name.as_ref().and_then(Value::as_str).unwrap_or("?"))
    }
}

/// Everything needed to reproduce a run. `params` holds the fully resolved
/// parameter record of `command`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandName,
    pub seed: u64,
    /// Tabular output layout; `None` uses the command's own default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    pub params: Value,
}

impl RunConfig {
    pub fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    pub fn params<P: Params>(&self) -> Result<P> {
        let p: P = serde_json::from_value(self.params.clone())
            .map_err(|e| CliError::input(format!("invalid {} parameters: {e}", self.command)))?;
        p.validate()?;
        Ok(p)
    }
}

/// Parameter record of one subcommand.
pub trait Params: Serialize + DeserializeOwned + Default {
    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// JSON config file {"command", "seed", "format", "params"}; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed of all random streams [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Data output (CSV or JSON lines).
    #[arg(long, short, global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Layout of tabular data [default: csv; json lines for qpe].
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the JSON run record to FILE instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub summary: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    command: Option<CommandName>,
    seed: Option<u64>,
    format: Option<Format>,
    params: Option<Value>,
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{} is not valid JSON: {e}", path.display())))
}

/// Copy the keys of `src` into `dst`; nulls are skipped when `skip_null`.
fn overlay(dst: &mut Value, src: Value, skip_null: bool, origin: &str) -> Result<()> {
    let Value::Object(src) = src else {
        return Err(CliError::input(format!("{origin}: params must be a JSON object")));
    };
    let dst = dst.as_object_mut().expect("parameter defaults serialize to an object");
    for (k, v) in src {
        if !(skip_null && v.is_null()) {
            dst.insert(k, v);
        }
    }
    Ok(())
}

/// Resolve defaults, config file and flags into a validated config.
pub fn resolve<P: Params>(command: CommandName, flags: &impl Serialize, global: &Global) -> Result<RunConfig> {
    let mut merged = serde_json::to_value(P::default()).expect("parameters serialize");
    let mut seed = None;
    let mut format = None;
    if let Some(path) = &global.config {
        let origin = path.display().to_string();
        let file: ConfigFile =
            serde_json::from_value(read_json(path)?).map_err(|e| CliError::input(format!("{origin}: {e}")))?;
        if let Some(c) = file.command.filter(|c| *c != command) {
            return Err(CliError::input(format!("{origin} configures `{c}`, not `{command}`")));
        }
        seed = file.seed;
        format = file.format;
        if let Some(p) = file.params {
            overlay(&mut merged, p, false, &origin)?;
        }
    }
    let flags = serde_json::to_value(flags).expect("flags serialize");
    overlay(&mut merged, flags, true, "flags")?;
    let cfg = RunConfig {
        command,
        seed: global.seed.or(seed).unwrap_or(0),
        format: global.format.or(format),
        params: merged,
    };
    // Round-trip so the echo holds exactly what the run uses.
    let params: P = cfg.params()?;
    Ok(RunConfig {
        params: serde_json::to_value(params).expect("parameters serialize"),
        ..cfg
    })
}
