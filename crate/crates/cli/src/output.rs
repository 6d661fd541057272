//! Artifact rendering: CSV with a provenance header, or JSON with a `config` object.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;

use crate::config::{RunConfig, CSV_PROVENANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// What a subcommand produced.
pub struct Report {
    /// Rendered CSV body (header row plus records).
    pub csv: Vec<u8>,
    pub json: serde_json::Value,
    /// Human-readable lines.
    pub summary: String,
    /// Set when the run finished but found no admissible answer.
    pub infeasible: Option<String>,
}

impl Report {
    pub fn new<R: Serialize, J: Serialize>(rows: &[R], json: &J, summary: String) -> Result<Self> {
        Ok(Self { csv: csv_body(rows)?, json: serde_json::to_value(json)?, summary, infeasible: None })
    }

    pub fn infeasible_if(mut self, cond: bool, why: impl Into<String>) -> Self {
        if cond {
            self.infeasible = Some(why.into());
        }
        self
    }
}

pub fn csv_body<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().context("flushing CSV buffer")
}

pub fn render(report: &Report, config: &RunConfig, format: Format) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match format {
        Format::Csv => {
            for (k, v) in config {
                writeln!(out, "{CSV_PROVENANCE}{k} = {v}")?;
            }
            out.extend_from_slice(&report.csv);
        }
        Format::Json => {
            let doc = serde_json::json!({ "config": config, "result": report.json });
            serde_json::to_writer_pretty(&mut out, &doc)?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

/// Writes the artifact to `path`, or to standard output when absent.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("--output: cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            Ok(stdout.flush()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        #[serde(rename = "P")]
        p: u64,
        note: Option<f64>,
    }

    #[test]
    fn csv_has_header_and_provenance() {
        let rep = Report::new(&[Row { p: 3, note: None }, Row { p: 4, note: Some(0.5) }], &1, String::new()).unwrap();
        let mut cfg = RunConfig::new();
        cfg.insert("seed".into(), "7".into());
        let text = String::from_utf8(render(&rep, &cfg, Format::Csv).unwrap()).unwrap();
        assert_eq!(text, "#@ seed = 7\nP,note\n3,\n4,0.5\n");
        let json: serde_json::Value = serde_json::from_slice(&render(&rep, &cfg, Format::Json).unwrap()).unwrap();
        assert_eq!(json["config"]["seed"], "7");
    }
}
