use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::values::Format;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Decimal with 12 significant digits; scientific outside 1e−6..1e16.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if !(-6..=15).contains(&exp) {
        return sci;
    }
    format!("{:.*}", (11 - exp).max(0) as usize, x)
}

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                CliError::input(format!("cannot create {}: {e}", p.display()))
            })?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

/// Run record carrying `tool_version`, `seed` and `config_echo` next to
/// the command's own fields.
pub fn record(cfg: &RunConfig, fields: Value) -> Value {
    let mut out = json!({
        "tool_version": TOOL_VERSION,
        "seed": cfg.seed,
        "config_echo": cfg,
    });
    if let (Some(obj), Value::Object(extra)) = (out.as_object_mut(), fields) {
        obj.extend(extra);
    }
    out
}

pub fn write_json_line(w: &mut dyn Write, value: &Value) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(|e| CliError::input(format!("cannot write JSON: {e}")))?;
    writeln!(w).map_err(io_error)
}

pub fn io_error(e: io::Error) -> CliError {
    CliError::input(format!("write failed: {e}"))
}

/// Tabular data as CSV, or as one JSON object per row keyed by `header`.
pub fn write_table(
    w: Box<dyn Write>,
    format: Format,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    match format {
        Format::Csv => {
            let mut out = csv::Writer::from_writer(w);
            let fail = |e: csv::Error| CliError::input(format!("cannot write CSV: {e}"));
            out.write_record(header).map_err(fail)?;
            for row in rows {
                out.write_record(&row).map_err(fail)?;
            }
            out.flush().map_err(io_error)
        }
        Format::Json => {
            let mut w = w;
            for row in rows {
                let obj: Map<String, Value> = header
                    .iter()
                    .zip(row)
                    .map(|(k, cell)| {
                        let v = serde_json::from_str::<Value>(&cell).unwrap_or(Value::String(cell));
                        (k.to_string(), v)
                    })
                    .collect();
                write_json_line(&mut *w, &Value::Object(obj))?;
            }
            w.flush().map_err(io_error)
        }
    }
}
