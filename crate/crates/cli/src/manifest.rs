use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use roadwatch_core::PipelineConfig;
use serde::Serialize;

/// Written next to every output so a run can be reproduced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: &'static str,
    pub inputs: Vec<PathBuf>,
    pub config_path: Option<PathBuf>,
    pub output: PathBuf,
    pub config: PipelineConfig,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config_path: Option<&Path>, output: &Path, config: PipelineConfig) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            inputs: Vec::new(),
            config_path: config_path.map(Path::to_path_buf),
            output: output.to_path_buf(),
            config,
            timings: BTreeMap::new(),
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    /// `out.jsonl` → `out.jsonl.manifest.json`; directories get `manifest.json` inside.
    pub fn path_for(output: &Path) -> PathBuf {
        if output.is_dir() {
            output.join("manifest.json")
        } else {
            let mut name = output.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            output.with_file_name(name)
        }
    }

    pub fn write(&self) -> std::io::Result<PathBuf> {
        let path = Self::path_for(&self.output);
        std::fs::write(&path, serde_json::to_string_pretty(self).expect("manifest serializes") + "\n")?;
        Ok(path)
    }
}
