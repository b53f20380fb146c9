//! Output sinks; every artifact carries the run metadata.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};
use stablegen::StableMechanism;

use crate::config::{ConfigError, Format, RunConfig};

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metadata {
    pub tool_version: &'static str,
    pub mechanism: StableMechanism,
    pub seed: u64,
    pub command_line: String,
}

impl Metadata {
    pub fn new(cfg: &RunConfig) -> Self {
        Metadata {
            tool_version: env!("CARGO_PKG_VERSION"),
            mechanism: cfg.mechanism,
            seed: cfg.seed,
            command_line: std::env::args().collect::<Vec<_>>().join(" "),
        }
    }
}

fn emit(cfg: &RunConfig, text: &str) -> anyhow::Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

/// `{"metadata": ..., <key>: <data>, ...}` with the fields of `body` merged in.
pub fn write_json(cfg: &RunConfig, body: Value) -> anyhow::Result<()> {
    let mut doc = json!({ "metadata": Metadata::new(cfg) });
    if let (Some(obj), Value::Object(fields)) = (doc.as_object_mut(), body) {
        obj.extend(fields);
    }
    emit(cfg, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

/// CSV with a leading `# {metadata json}` comment line.
pub fn write_csv(cfg: &RunConfig, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut text = format!("# {}\n{}\n", serde_json::to_string(&Metadata::new(cfg))?, header.join(","));
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    emit(cfg, &text)
}

/// Chosen format, falling back to the command's default.
pub fn format_or(cfg: &RunConfig, default: Format) -> Format {
    cfg.format.unwrap_or(default)
}
