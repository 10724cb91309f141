//! Config resolution: defaults, then an optional file, then `--set` overrides.

use std::path::Path;

use anyhow::{anyhow, Context};
use roadwatch_core::PipelineConfig;

use crate::CliError;

/// Apply one `section.key=value` override. The value is parsed as a TOML
/// literal, so numbers, booleans and quoted strings all work.
pub fn apply_override(config: PipelineConfig, assignment: &str) -> Result<PipelineConfig, CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {assignment:?} is not of the form section.key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    let [section, field] = path.as_slice() else {
        return Err(CliError::Usage(format!("override key {key:?} must be section.key")));
    };
    let literal: toml::Table = toml::from_str(&format!("v = {}", value.trim()))
        .map_err(|e| CliError::Usage(format!("override value {value:?}: {e}")))?;
    let literal = literal.get("v").cloned().expect("parsed table has v");

    let mut table: toml::Table = toml::from_str(&config.to_toml()).expect("config round-trips through TOML");
    let sect = table
        .get_mut(*section)
        .and_then(toml::Value::as_table_mut)
        .ok_or_else(|| CliError::Usage(format!("unknown config section {section:?}")))?;
    if !sect.contains_key(*field) {
        return Err(CliError::Usage(format!("unknown config key {key:?}")));
    }
    // integers are accepted where floats are expected
    let literal = match (sect.get(*field), literal) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    sect.insert(field.to_string(), literal);
    let text = toml::to_string(&table).expect("table serializes");
    PipelineConfig::from_str_any(&text).map_err(|e| CliError::Usage(format!("override {assignment:?}: {e}")))
}

pub fn resolve(config_path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let mut config = match config_path {
        Some(p) => PipelineConfig::load(p)
            .with_context(|| format!("loading config {}", p.display()))
            .map_err(CliError::Input)?,
        None => PipelineConfig::default(),
    };
    for o in overrides {
        config = apply_override(config, o)?;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(anyhow!("cannot read {}: {e}", path.display())))
}
