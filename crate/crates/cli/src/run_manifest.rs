use std::path::{Path, PathBuf};

use serde::Serialize;
use sitta::io::atomic_write;

#[derive(Debug, Serialize)]
struct Record<'a> {
    command: &'a str,
    artifact: &'a str,
    path: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

/// One JSON line per artifact written by an invocation.
pub struct RunManifest {
    command: &'static str,
    seed: Option<u64>,
    items: Vec<(&'static str, PathBuf)>,
}

impl RunManifest {
    pub const FILE: &'static str = "run_manifest.jsonl";

    pub fn new(command: &'static str, seed: Option<u64>) -> Self {
        RunManifest {
            command,
            seed,
            items: Vec::new(),
        }
    }

    pub fn add(&mut self, artifact: &'static str, path: impl Into<PathBuf>) {
        self.items.push((artifact, path.into()));
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let mut text = String::new();
        for (artifact, path) in &self.items {
            let rec = Record {
                command: self.command,
                artifact,
                path,
                seed: self.seed,
            };
            text.push_str(&serde_json::to_string(&rec)?);
            text.push('\n');
        }
        let p = dir.join(Self::FILE);
        atomic_write(&p, text.as_bytes())?;
        Ok(p)
    }
}
