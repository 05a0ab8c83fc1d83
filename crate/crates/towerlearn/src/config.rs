//! Run configuration: a TOML document layered over a named preset.
//!
//! Resolution order is preset, then the file, then `--override` pairs. Top
//! level keys are `preset`, `seed`, `precision` and `run_dir`; the sections
//! are `[env]` (with `[env.difficulty]`), `[model]`, `[ppo]`, `[train]` and
//! `[eval]`. An override key is either a dotted path (`ppo.total_updates`)
//! or a bare field name that occurs in exactly one section
//! (`total_updates`). Override values use TOML syntax; anything that does
//! not parse as a TOML value is taken as a string.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use towerlearn_core::env::{EnvConfig, Theme};
use towerlearn_core::eval::EvalProtocol;
use towerlearn_core::model::ModelConfig;
use towerlearn_core::ppo::PpoConfig;

use crate::error::{Error, IoContext, Result};

pub const DESK: &str = "desk";
pub const PAPER_FIDELITY: &str = "paper-fidelity";
pub const PRESETS: [&str; 2] = [DESK, PAPER_FIDELITY];

/// Floating-point type used for training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::config(format!("precision must be f32 or f64, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub training_seeds: Vec<u64>,
    pub training_themes: Vec<Theme>,
    /// Checkpoint every this many updates (and always after the last one);
    /// 0 keeps only the final checkpoint.
    pub checkpoint_interval: u64,
    /// Evaluate every this many updates; 0 disables evaluation.
    pub eval_interval: u64,
    /// Write an episode recording for every evaluation episode.
    pub record_episodes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            training_seeds: (0..100).collect(),
            training_themes: Theme::TRAINING.to_vec(),
            checkpoint_interval: 100,
            eval_interval: 200,
            record_episodes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
    pub precision: Precision,
    pub run_dir: PathBuf,
    pub env: EnvConfig,
    pub model: ModelConfig,
    pub ppo: PpoConfig,
    pub train: TrainConfig,
    pub eval: EvalProtocol,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            DESK => Ok(RunConfig {
                preset: DESK.into(),
                seed: 0,
                precision: Precision::F32,
                run_dir: PathBuf::from("runs/desk"),
                env: EnvConfig::default(),
                model: ModelConfig::desk(),
                ppo: PpoConfig::desk(),
                train: TrainConfig::default(),
                eval: EvalProtocol::default(),
            }),
            PAPER_FIDELITY => Ok(RunConfig {
                preset: PAPER_FIDELITY.into(),
                seed: 0,
                precision: Precision::F32,
                run_dir: PathBuf::from("runs/paper-fidelity"),
                env: EnvConfig { frame_height: 84, frame_width: 84, ..EnvConfig::default() },
                model: ModelConfig::paper_fidelity(),
                ppo: PpoConfig::paper(),
                train: TrainConfig::default(),
                eval: EvalProtocol::default(),
            }),
            other => Err(Error::config(format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")))),
        }
    }

    /// Reads `path` (or starts from the desk preset when `None`) and applies
    /// `overrides`, each `key=value`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).at(p)?,
            None => String::new(),
        };
        Self::resolve(&text, overrides)
    }

    /// Resolves a TOML document and overrides against its preset.
    pub fn resolve(text: &str, overrides: &[String]) -> Result<Self> {
        let file: Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let mut parsed_overrides = Vec::with_capacity(overrides.len());
        for o in overrides {
            let (key, value) =
                o.split_once('=').ok_or_else(|| Error::config(format!("override `{o}` is not key=value")))?;
            parsed_overrides.push((key.trim().to_string(), parse_value(value.trim())));
        }
        let preset_name = parsed_overrides
            .iter()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone())
            .or_else(|| file.get("preset").cloned())
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| Error::config("preset must be a string")))
            .transpose()?
            .unwrap_or_else(|| DESK.to_string());
        let base = Self::preset(&preset_name)?;
        let mut merged = Value::try_from(&base).map_err(|e| Error::config(e.to_string()))?;
        let Value::Table(ref mut table) = merged else { unreachable!("a struct serializes to a table") };
        merge(table, file, "")?;
        for (key, value) in parsed_overrides {
            apply_override(table, &key, value)?;
        }
        let text = toml::to_string(&merged).map_err(|e| Error::config(e.to_string()))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.model.validate()?;
        self.ppo.validate()?;
        if self.model.frame_height != self.env.frame_height
            || self.model.frame_width != self.env.frame_width
            || self.model.stacked_frames != self.env.stacked_frames
        {
            return Err(Error::config(format!(
                "model.frame_height/frame_width/stacked_frames ({}, {}, {}) must match env ({}, {}, {})",
                self.model.frame_height,
                self.model.frame_width,
                self.model.stacked_frames,
                self.env.frame_height,
                self.env.frame_width,
                self.env.stacked_frames
            )));
        }
        if self.train.training_seeds.is_empty() {
            return Err(Error::config("train.training_seeds is empty"));
        }
        if self.train.training_themes.is_empty() {
            return Err(Error::config("train.training_themes is empty"));
        }
        self.eval.validate(&self.train.training_seeds)?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Writes the resolved config as `config.toml` in `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, self.to_toml()?).at(&path)?;
        Ok(path)
    }

    /// Reads a resolved config back, with no preset layering beyond its own.
    pub fn read_resolved(dir: &Path) -> Result<Self> {
        Self::load(Some(&dir.join(CONFIG_FILE)), &[])
    }
}

pub const CONFIG_FILE: &str = "config.toml";

fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("the key was just written"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Recursively overlays `over` onto `base`. Keys absent from the base are
/// kept so deserialization can name them.
fn merge(base: &mut Table, over: Table, prefix: &str) -> Result<()> {
    for (k, v) in over {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o, &path)?,
            (Some(Value::Table(_)), _) => return Err(Error::config(format!("`{path}` must be a section"))),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    Ok(())
}

fn apply_override(root: &mut Table, key: &str, value: Value) -> Result<()> {
    let path: Vec<String> = if key.contains('.') {
        key.split('.').map(str::to_string).collect()
    } else {
        let mut hits = Vec::new();
        find_key(root, key, &mut Vec::new(), &mut hits);
        match hits.len() {
            0 => return Err(Error::config(format!("override `{key}` matches no config field"))),
            1 => hits.remove(0),
            _ => {
                let names: Vec<String> = hits.iter().map(|p| p.join(".")).collect();
                return Err(Error::config(format!("override `{key}` is ambiguous: {}", names.join(", "))));
            }
        }
    };
    let (last, parents) = path.split_last().expect("split never yields nothing");
    let mut table = root;
    for p in parents {
        table = match table.entry(p.clone()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => return Err(Error::config(format!("override `{key}`: `{p}` is not a section"))),
        };
    }
    table.insert(last.clone(), value);
    Ok(())
}

fn find_key(table: &Table, key: &str, prefix: &mut Vec<String>, hits: &mut Vec<Vec<String>>) {
    for (k, v) in table {
        prefix.push(k.clone());
        if k == key {
            hits.push(prefix.clone());
        } else if let Value::Table(t) = v {
            find_key(t, key, prefix, hits);
        }
        prefix.pop();
    }
}
