//! Per-experiment manifest: full config echo, notes, artifact hashes.

use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub struct Manifest {
    experiment: String,
    config_echo: String,
    lines: Vec<(String, String)>,
    artifacts: Vec<(String, String)>, // (filename, sha256 hex)
    failures: Vec<String>,
}

impl Manifest {
    pub fn new(experiment: &str, config_echo: String) -> Self {
        Manifest {
            experiment: experiment.to_string(),
            config_echo,
            lines: Vec::new(),
            artifacts: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn failure(&mut self, what: impl Into<String>) {
        self.failures.push(what.into());
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Write `content` into the experiment directory and record its content
    /// hash.
    pub fn write_artifact(&mut self, dir: &Path, name: &str, content: &str) -> std::io::Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, content)?;
        let mut hasher = Sha256::new();
        hasher.update(content.as_bytes());
        self.artifacts
            .push((name.to_string(), format!("{:x}", hasher.finalize())));
        Ok(path)
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        out.push_str(&format!("experiment = {}\n", self.experiment));
        out.push_str(&format!(
            "status = {}\n",
            if self.failures.is_empty() { "ok" } else { "partial-failure" }
        ));
        for f in &self.failures {
            out.push_str(&format!("failure = {f}\n"));
        }
        for (k, v) in &self.lines {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (name, hash) in &self.artifacts {
            out.push_str(&format!("sha256_{name} = {hash}\n"));
        }
        out.push_str("# --- config echo ---\n");
        out.push_str(&self.config_echo);
        std::fs::write(dir.join("manifest.txt"), out)
    }
}
