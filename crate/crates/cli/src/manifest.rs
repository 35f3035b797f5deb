//! Run manifests: config echo, seed, version, wall clock, and per-output
//! checksums. The manifest is written last, via a temp-file rename, so its
//! presence marks a completed run.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug)]
pub struct RunManifest {
    pub artifact_version: String,
    pub seed: u64,
    pub wallclock_ms: u128,
    pub config_sha256: String,
    pub config_text: String,
    /// (relative file name, sha256 hex)
    pub outputs: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(config_text: &str, seed: u64, wallclock_ms: u128) -> Self {
        RunManifest {
            artifact_version: ARTIFACT_VERSION.to_string(),
            seed,
            wallclock_ms,
            config_sha256: sha256_hex(config_text.as_bytes()),
            config_text: config_text.to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let hash = sha256_file(&dir.join(name))?;
        self.outputs.push((name.to_string(), hash));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("manifest-version = 1\n");
        out.push_str(&format!("artifact-version = {}\n", self.artifact_version));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("wallclock-ms = {}\n", self.wallclock_ms));
        out.push_str(&format!("config-sha256 = {}\n", self.config_sha256));
        for (name, hash) in &self.outputs {
            out.push_str(&format!("output = {name} {hash}\n"));
        }
        out.push_str("config-begin\n");
        out.push_str(&self.config_text);
        if !self.config_text.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("config-end\n");
        out
    }

    /// Write atomically: temp file in the same directory, then rename.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let tmp = dir.join(format!("{MANIFEST_NAME}.tmp"));
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&tmp, self.render())
            .with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &path)
            .with_context(|| format!("finalizing {}", path.display()))?;
        Ok(path)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut artifact_version = None;
        let mut seed = None;
        let mut wallclock_ms = 0u128;
        let mut config_sha256 = None;
        let mut outputs = Vec::new();
        let mut config_lines: Vec<&str> = Vec::new();
        let mut in_config = false;
        let mut saw_config_end = false;
        for line in text.lines() {
            if in_config {
                if line == "config-end" {
                    in_config = false;
                    saw_config_end = true;
                } else {
                    config_lines.push(line);
                }
                continue;
            }
            if line == "config-begin" {
                in_config = true;
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "artifact-version" => artifact_version = Some(value.to_string()),
                "seed" => seed = Some(value.parse()?),
                "wallclock-ms" => wallclock_ms = value.parse()?,
                "config-sha256" => config_sha256 = Some(value.to_string()),
                "output" => {
                    let (name, hash) = value
                        .rsplit_once(' ')
                        .ok_or_else(|| anyhow!("malformed output line: {line}"))?;
                    outputs.push((name.trim().to_string(), hash.trim().to_string()));
                }
                _ => {}
            }
        }
        if in_config || !saw_config_end {
            bail!("manifest config block is not terminated");
        }
        let mut config_text = config_lines.join("\n");
        config_text.push('\n');
        Ok(RunManifest {
            artifact_version: artifact_version.ok_or_else(|| anyhow!("manifest lacks artifact-version"))?,
            seed: seed.ok_or_else(|| anyhow!("manifest lacks seed"))?,
            wallclock_ms,
            config_sha256: config_sha256.ok_or_else(|| anyhow!("manifest lacks config-sha256"))?,
            config_text,
            outputs,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Self::parse(&text)
    }
}
