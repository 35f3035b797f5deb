//! Flat key = value experiment configs.
//!
//! The format is line-oriented UTF-8: `key = value`, `#` comments, blank
//! lines ignored. Keys use dots for grouping but there is no nesting.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gaussflow_core::fields::{FieldEnsemble, FieldSpec};

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, (usize, String)>,
    text: String,
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("config line {}: expected `key = value`, got `{raw}`", lineno + 1)
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                bail!("config line {}: empty key", lineno + 1);
            }
            if entries.contains_key(&key) {
                bail!("config line {}: duplicate key `{key}`", lineno + 1);
            }
            entries.insert(key, (lineno + 1, value.trim().to_string()));
        }
        Ok(ExperimentConfig {
            entries,
            text: text.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| anyhow!("config is missing required key `{key}`"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let (line, v) = self
            .entries
            .get(key)
            .ok_or_else(|| anyhow!("config is missing required key `{key}`"))?;
        v.parse()
            .map_err(|_| anyhow!("config line {line}: key `{key}`: `{v}` is not a number"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(_) => self.f64(key),
            None => Ok(default),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let (line, v) = self
            .entries
            .get(key)
            .ok_or_else(|| anyhow!("config is missing required key `{key}`"))?;
        v.parse()
            .map_err(|_| anyhow!("config line {line}: key `{key}`: `{v}` is not a count"))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(_) => self.usize(key),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.entries.get(key) {
            Some((line, v)) => v
                .parse()
                .map_err(|_| anyhow!("config line {line}: key `{key}`: `{v}` is not an integer")),
            None => Ok(default),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let (line, v) = self
            .entries
            .get(key)
            .ok_or_else(|| anyhow!("config is missing required key `{key}`"))?;
        v.split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    anyhow!("config line {line}: key `{key}`: `{tok}` is not a number")
                })
            })
            .collect()
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            Some(_) => self.f64_list(key),
            None => Ok(default.to_vec()),
        }
    }

    /// Seed is required: the (config, seed) pair determines every output byte.
    pub fn seed(&self) -> Result<u64> {
        self.u64_or("seed", 0)
    }

    fn field_at(&self, prefix: &str, dim: usize) -> Result<FieldSpec> {
        let family = self.require(&format!("{prefix}.family"))?;
        let params = if self.get(&format!("{prefix}.params")).is_some() {
            self.f64_list(&format!("{prefix}.params"))?
        } else {
            Vec::new()
        };
        let mut spec = FieldSpec::from_family(family, dim, &params)
            .map_err(|e| anyhow!("field `{prefix}`: {e}"))?;
        if let Some(_) = self.get(&format!("{prefix}.growth")) {
            // declared growth constants are metadata; the built-in families
            // already carry theirs, so an override is rejected rather than
            // silently ignored
            bail!("field `{prefix}`: growth constants of built-in families are fixed");
        }
        let _ = &mut spec;
        Ok(spec)
    }

    /// The coefficient family under `drift.*` and `diffusion.<i>.*`.
    pub fn ensemble(&self) -> Result<FieldEnsemble> {
        self.ensemble_with_prefix("")
    }

    /// Second family for coupled experiments, under `hat.drift.*` etc.
    pub fn hat_ensemble(&self) -> Result<FieldEnsemble> {
        self.ensemble_with_prefix("hat.")
    }

    fn ensemble_with_prefix(&self, prefix: &str) -> Result<FieldEnsemble> {
        let dim = self.usize("dim")?;
        let drift = self.field_at(&format!("{prefix}drift"), dim)?;
        let mut diffusions = Vec::new();
        for i in 0.. {
            let key = format!("{prefix}diffusion.{i}.family");
            if self.get(&key).is_none() {
                break;
            }
            diffusions.push(self.field_at(&format!("{prefix}diffusion.{i}"), dim)?);
        }
        FieldEnsemble::new(drift, diffusions).map_err(|e| anyhow!("{e}"))
    }
}
