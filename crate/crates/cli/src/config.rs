//! Key-value config files, flag merging and embedded run provenance.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgMatches, Command};

/// Effective settings of one run, keyed by long flag name.
pub type RunConfig = BTreeMap<String, String>;

/// Prefix of provenance lines at the top of CSV outputs.
pub const CSV_PROVENANCE: &str = "#@ ";

/// Flags that never change the produced artifact and so stay out of provenance.
const NOT_RECORDED: &[&str] = &["config", "output", "threads", "out-dir", "transcript"];

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, origin: &str) -> Result<RunConfig> {
    let mut map = RunConfig::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{origin}:{}: expected `key = value`, got `{raw}`", no + 1);
        };
        let key = normalize(k);
        if key.is_empty() {
            bail!("{origin}:{}: empty key", no + 1);
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("--config: cannot read {}", path.display()))?;
    parse_kv(&text, &path.display().to_string())
}

/// Recovers the run config embedded in a previous output, CSV or JSON.
pub fn read_provenance(path: &Path) -> Result<RunConfig> {
    let file = fs::File::open(path).with_context(|| format!("replay: cannot read {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_start().starts_with('{') {
        let mut rest = String::new();
        std::io::Read::read_to_string(&mut reader, &mut rest)?;
        let doc: serde_json::Value = serde_json::from_str(&(first + &rest))
            .with_context(|| format!("replay: {} is not valid JSON", path.display()))?;
        let Some(obj) = doc.get("config").and_then(|c| c.as_object()) else {
            bail!("replay: {} has no `config` object", path.display());
        };
        return Ok(obj
            .iter()
            .map(|(k, v)| (k.clone(), v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())))
            .collect());
    }
    let mut text = String::new();
    for line in std::iter::once(Ok(first)).chain(reader.lines()) {
        let line = line?;
        match line.trim_end().strip_prefix(CSV_PROVENANCE.trim_end()) {
            Some(kv) => {
                text.push_str(kv);
                text.push('\n');
            }
            None => break,
        }
    }
    let map = parse_kv(&text, &path.display().to_string())?;
    if map.is_empty() {
        bail!("replay: {} carries no `{CSV_PROVENANCE}key = value` header", path.display());
    }
    Ok(map)
}

fn takes_value(cmd: &Command, id: &str) -> Option<bool> {
    cmd.get_arguments()
        .find(|a| a.get_id().as_str() == id || a.get_long() == Some(id))
        .map(|a| a.get_action().takes_values())
}

fn long_name(cmd: &Command, id: &str) -> Option<String> {
    cmd.get_arguments().find(|a| a.get_id().as_str() == id).and_then(|a| a.get_long()).map(str::to_string)
}

/// Turns config entries into flags, skipping keys already given on the
/// command line. Booleans become bare flags when true.
pub fn config_to_args(cmd: &Command, config: &RunConfig, explicit: &[String]) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (key, value) in config {
        if key == "command" || key == "config" || explicit.iter().any(|e| e == key) {
            continue;
        }
        match takes_value(cmd, key) {
            None => bail!("config key `{key}` is not an option of `{}`", cmd.get_name()),
            Some(true) => {
                args.push(format!("--{key}").into());
                args.push(value.into());
            }
            Some(false) => match value.as_str() {
                "true" => args.push(format!("--{key}").into()),
                "false" => {}
                other => bail!("config key `{key}` expects true or false, got `{other}`"),
            },
        }
    }
    Ok(args)
}

/// Long names of the arguments the user typed.
pub fn explicit_flags(cmd: &Command, matches: &ArgMatches) -> Vec<String> {
    matches
        .ids()
        .filter(|id| matches.value_source(id.as_str()) == Some(ValueSource::CommandLine))
        .filter_map(|id| long_name(cmd, id.as_str()))
        .collect()
}

/// The effective settings of a parsed subcommand, defaults included.
pub fn effective_config(cmd: &Command, matches: &ArgMatches) -> RunConfig {
    let mut map = RunConfig::new();
    map.insert("command".into(), cmd.get_name().to_string());
    for arg in cmd.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if NOT_RECORDED.contains(&long) {
            continue;
        }
        let id = arg.get_id().as_str();
        let Ok(Some(raw)) = matches.try_get_raw(id) else { continue };
        let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
        if !values.is_empty() {
            map.insert(long.to_string(), values.join(","));
        }
    }
    map
}
