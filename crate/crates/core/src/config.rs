//! Run configuration: one TOML document covering every stage, layered as
//! preset defaults, then the config file, then environment overrides.
//!
//! Environment overrides mirror config keys: `SELFPRIOR__` followed by the
//! key path joined with `__`, case-insensitive. For example
//! `SELFPRIOR__PIPELINE__PRIOR2D_XYZ__STEPS=200` sets
//! `pipeline.prior2d_xyz.steps`. Values are parsed as TOML values and fall
//! back to plain strings.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::EvalProtocol;
use crate::pipeline::{PipelineConfig, StageRecord};

pub const ENV_PREFIX: &str = "SELFPRIOR__";

/// Named default sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Network sizes and step counts as published; hours per object.
    #[default]
    Full,
    /// Step counts divided by four, narrower networks and a coarser mesh
    /// and atlas schedule, sized for a workstation CPU.
    Desk,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::Desk => "desk",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    /// Input point cloud.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub evaluation: EvalProtocol,
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        RunConfig {
            preset,
            input: None,
            output: None,
            pipeline: PipelineConfig::preset(preset),
            evaluation: EvalProtocol::default(),
        }
    }

    /// Builds a config from optional TOML text and `(name, value)`
    /// environment pairs. `preset` overrides any `preset` key in the text.
    pub fn layered(
        text: Option<&str>,
        source: &str,
        preset: Option<Preset>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut doc = match text {
            Some(t) => t
                .parse::<Table>()
                .map_err(|e| Error::Config(format!("{source}: {}", e.message())))?,
            None => Table::new(),
        };
        apply_env(&mut doc, env)?;
        let preset = match (preset, doc.get("preset")) {
            (Some(p), _) => p,
            (None, Some(Value::String(s))) => s.parse()?,
            (None, Some(v)) => return Err(Error::Config(format!("{source}: preset must be a string, got {v}"))),
            (None, None) => Preset::default(),
        };
        doc.insert("preset".into(), Value::String(preset.name().into()));
        let mut base = to_table(&RunConfig::for_preset(preset))?;
        merge(&mut base, doc);
        let cfg: RunConfig = Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{source}: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (when given) and the process environment.
    pub fn load(path: Option<&Path>, preset: Option<Preset>) -> Result<Self> {
        let text = path.map(io::read_text).transpose()?;
        let source = path.map_or_else(|| "defaults".to_string(), |p| p.display().to_string());
        RunConfig::layered(text.as_deref(), &source, preset, std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.evaluation.samples == 0 || !(self.evaluation.threshold > 0.0) || self.evaluation.emd_points == 0 {
            return Err(Error::Config(
                "evaluation needs positive samples, threshold and emd_points".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Hash of the serialized config; identical configs hash equally.
    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }
}

/// Summary written next to the outputs of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Hash of the full run config (see [`RunConfig::hash`]).
    pub config_hash: String,
    /// Hash of the pipeline section, as recorded in checkpoints.
    pub pipeline_hash: String,
    pub seed: u64,
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))
    }
}

/// Parameters a synthetic cloud was drawn with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRecord {
    pub source: PathBuf,
    pub seed: u64,
    pub n_points: usize,
    pub noise_std_fraction: f64,
    pub colors: bool,
}

impl SynthRecord {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize record: {e}")))
    }
}

/// Hex SHA-256 of the TOML serialization of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let text = toml::to_string(value).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    Table::try_from(value).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_env_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Inserts every `SELFPRIOR__A__B=value` pair at key path `a.b`.
pub fn apply_env(doc: &mut Table, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.len() > ENV_PREFIX.len() && k[..ENV_PREFIX.len()].eq_ignore_ascii_case(ENV_PREFIX))
        .collect();
    vars.sort();
    for (name, raw) in vars {
        let path: Vec<String> = name[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(Error::Config(format!("malformed override variable `{name}`")));
        }
        let mut table = &mut *doc;
        for key in &path[..path.len() - 1] {
            let entry = table.entry(key.clone()).or_insert_with(|| Value::Table(Table::new()));
            table = match entry {
                Value::Table(t) => t,
                _ => return Err(Error::Config(format!("`{name}` descends into non-table key `{key}`"))),
            };
        }
        table.insert(path[path.len() - 1].clone(), parse_env_value(&raw));
    }
    Ok(())
}
