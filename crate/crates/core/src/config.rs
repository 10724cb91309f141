use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::error::{ConfigError, Error};
use crate::fusion::FusionConfig;
use crate::rules::RuleConfig;
use crate::trajectory::DEFAULT_SMOOTHING;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocityConfig {
    /// Exponential smoothing for velocities estimated from positions, in (0, 1].
    pub smoothing: f64,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        Self { smoothing: DEFAULT_SMOOTHING }
    }
}

/// Every tunable of the pipeline. Sections missing from a config file keep
/// their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub rules: RuleConfig,
    pub classifier: ClassifierConfig,
    pub fusion: FusionConfig,
    pub velocity: VelocityConfig,
}

fn parse_text<T: for<'de> Deserialize<'de>>(text: &str, json: bool) -> Result<T, ConfigError> {
    if json {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

fn looks_like_json(path: Option<&Path>, text: &str) -> bool {
    match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => true,
        Some("toml") => false,
        _ => text.trim_start().starts_with('{'),
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

impl PipelineConfig {
    /// Parse TOML or JSON (JSON when the text starts with `{`).
    pub fn from_str_any(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = parse_text(text, looks_like_json(None, text))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = read(path)?;
        let cfg: Self = parse_text(&text, looks_like_json(Some(path), &text))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.rules.validate()?;
        self.classifier.validate()?;
        self.fusion.validate()?;
        let a = self.velocity.smoothing;
        if !(a > 0.0 && a <= 1.0) {
            return Err(ConfigError::Invalid { field: "velocity.smoothing", expected: "in (0, 1]", value: a });
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl RuleConfig {
    /// Load just the four rule thresholds from a flat TOML or JSON file.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = read(path)?;
        let cfg: Self = parse_text(&text, looks_like_json(Some(path), &text))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
