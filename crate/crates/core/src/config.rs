//! Experiment files: TOML with nested sections, optionally layered on a
//! named preset.
//!
//! ```toml
//! preset = "table2-g20-sn"   # optional base
//! name = "my-run"
//!
//! [env]
//! kind = "windy"
//! dims = 2
//!
//! [posterior]
//! family = "categorical"
//! goal_dim = 20
//!
//! [train]
//! total_env_steps = 40000
//! ```
//!
//! Unknown keys are rejected. Every resolved key remembers whether it came
//! from the file, the preset, or a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::agent::AgentConfig;
use crate::envs::EnvConfig;
use crate::posterior::PosteriorConfig;
use crate::trainer::{EvalConfig, TrainConfig};
use crate::{Error, Result};

/// Environment variable overriding `output.directory`.
pub const OUTPUT_ENV_VAR: &str = "VGCRL_OUT";

mod defaults {
    pub fn directory() -> String {
        "runs".into()
    }
    pub fn formats() -> Vec<super::OutputFormat> {
        vec![super::OutputFormat::Csv, super::OutputFormat::Json]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "defaults::directory")]
    pub directory: String,
    #[serde(default = "defaults::formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: defaults::directory(),
            formats: defaults::formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run name; output goes to `<directory>/<name>/`.
    #[serde(default)]
    pub name: Option<String>,
    /// Preset this config was layered on, if any.
    #[serde(default)]
    pub preset: Option<String>,
    pub env: EnvConfig,
    pub posterior: PosteriorConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        let env = self.env.build(0, 0)?;
        let spec = crate::envs::Environment::spec(&env);
        self.posterior.validate(spec.obs_dim)?;
        self.agent.validate()?;
        self.train.validate(self.env.horizon * self.train.episodes_per_iteration)?;
        self.eval.validate()?;
        if self.output.directory.is_empty() {
            return Err(Error::config("output.directory", "must not be empty"));
        }
        if self.output.formats.is_empty() {
            return Err(Error::config("output.formats", "need at least one format"));
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(Error::config("name", "must be a plain directory name"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Output root, honoring the environment override.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV_VAR) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(&self.output.directory),
        }
    }

    pub fn run_name(&self) -> String {
        self.name
            .clone()
            .or_else(|| self.preset.clone())
            .unwrap_or_else(|| "experiment".into())
    }
}

/// Where a resolved key's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    Preset,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    /// Dotted key path of every resolved leaf, with its origin.
    pub provenance: BTreeMap<String, Source>,
}

impl ResolvedConfig {
    /// `key = value  # source` lines for every resolved leaf.
    pub fn report(&self) -> String {
        let value = Value::try_from(&self.config).expect("config serializes");
        let mut leaves = BTreeMap::new();
        flatten("", &value, &mut leaves);
        let mut out = String::new();
        for (key, v) in leaves {
            let source = self.provenance.get(&key).copied().unwrap_or(Source::Default);
            let tag = match source {
                Source::Default => "default",
                Source::Preset => "preset",
                Source::Explicit => "explicit",
            };
            out.push_str(&format!("{key} = {v}  # {tag}\n"));
        }
        out
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, String>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

fn leaf_keys(prefix: &str, value: &Value, out: &mut Vec<String>) {
    if let Value::Table(t) = value {
        for (k, v) in t {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            leaf_keys(&key, v, out);
        }
    } else {
        out.push(prefix.to_string());
    }
}

/// Overlays `top` onto `base`, recursing into tables.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Table(b), Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_table() && v.is_table() => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Finds the 1-based line where `field` (dotted) is assigned in `text`.
fn line_of(text: &str, field: &str) -> Option<usize> {
    let key = field.rsplit('.').next()?;
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn attach_line(err: Error, text: &str) -> Error {
    match err {
        Error::Config { field, reason } => match line_of(text, &field) {
            Some(line) => Error::Config {
                reason: format!("{reason} (line {line})"),
                field,
            },
            None => Error::Config { field, reason },
        },
        other => other,
    }
}

/// Parses experiment text, layering it on its `preset` if one is named.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ResolvedConfig> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let top: Value = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let mut explicit = Vec::new();
    leaf_keys("", &top, &mut explicit);

    let mut provenance = BTreeMap::new();
    let merged = match top.get("preset").and_then(Value::as_str) {
        Some(name) => {
            let preset = crate::presets::preset_text(name)
                .ok_or_else(|| Error::config("preset", format!("unknown preset {name:?}")))?;
            let mut base: Value = toml::from_str(preset).expect("presets are valid TOML");
            let mut preset_keys = Vec::new();
            leaf_keys("", &base, &mut preset_keys);
            provenance.extend(preset_keys.into_iter().map(|k| (k, Source::Preset)));
            merge(&mut base, top);
            base
        }
        None => top,
    };
    provenance.extend(explicit.into_iter().map(|k| (k, Source::Explicit)));

    let config: ExperimentConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
    config.validate().map_err(|e| attach_line(e, text))?;
    Ok(ResolvedConfig { config, provenance })
}

pub fn parse_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}
