//! Experiment configuration: one TOML document with `data`, `augment`,
//! `model`, `train` and `eval` sections, layered as
//! profile defaults < file < `MANEUVER_*` environment < `--set` < flags.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::augment::{AugOp, AugPipelineConfig, AugmixParams, Preset};
use crate::dataio::HorizonSpec;
use crate::error::{Error, Result};
use crate::eval::ReportFormat;
use crate::net::{BackboneSpec, BranchDims, DropBlockParams, ModelConfig};
use crate::train::{TrainConfig, TrainParams};

pub const ENV_PREFIX: &str = "MANEUVER_";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile {s:?} (desk|paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Dataset directory holding `manifest.csv`.
    pub root: PathBuf,
    /// Drives synthesis and splitting.
    pub seed: u64,
    pub synth_clips: usize,
    pub synth_size: usize,
    /// Fraction of clips kept for training in the holdout split.
    pub split_ratio: f64,
    pub k_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub preset: Preset,
    /// Ops actually applied; defaults to the preset's ops.
    pub enabled: BTreeSet<AugOp>,
    pub flip_prob: f64,
    pub cutout_fraction: f64,
    pub cutout_fill: u8,
    pub augmix: AugmixParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub horizons: Vec<HorizonSpec>,
    pub otc: bool,
    pub presets: Vec<Preset>,
    pub formats: Vec<String>,
    /// `final` or `best`.
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub augment: AugmentSection,
    pub model: ModelConfig,
    pub train: TrainParams,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            params: self.train.clone(),
            model: self.model.clone(),
            augment: AugPipelineConfig {
                enabled: self.augment.enabled.clone(),
                flip_prob: self.augment.flip_prob,
                cutout_fraction: self.augment.cutout_fraction,
                cutout_fill: self.augment.cutout_fill,
                augmix: self.augment.augmix,
            },
        }
    }

    pub fn formats(&self) -> Result<Vec<ReportFormat>> {
        self.eval.formats.iter().map(|f| f.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(d.split_ratio > 0.0 && d.split_ratio < 1.0) {
            return Err(Error::Config("data.split_ratio must be in (0, 1)".into()));
        }
        if d.k_folds < 2 {
            return Err(Error::Config("data.k_folds must be >= 2".into()));
        }
        if self.eval.horizons.is_empty() {
            return Err(Error::Config("eval.horizons must not be empty".into()));
        }
        if !matches!(self.eval.checkpoint.as_str(), "final" | "best") {
            return Err(Error::Config("eval.checkpoint must be final or best".into()));
        }
        self.formats().map_err(|e| Error::Config(e.to_string()))?;
        self.train_config().validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        })
    }

    /// Canonical TOML text; also the input of the report config hash.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Profile defaults as a TOML tree. `augment.enabled` and
/// `train.label_smoothing` are left out so the preset can fill them.
pub fn defaults(profile: Profile) -> Value {
    let (dims, backbone, train) = match profile {
        Profile::Desk => (BranchDims::desk(), BackboneSpec::desk(), TrainParams::desk()),
        Profile::Paper => (BranchDims::paper(), BackboneSpec::paper(), TrainParams::paper()),
    };
    let aug = AugPipelineConfig::default();
    let cfg = ExperimentConfig {
        data: DataSection {
            root: PathBuf::from("data"),
            seed: 7,
            synth_clips: 500,
            synth_size: 32,
            split_ratio: 0.8,
            k_folds: 5,
        },
        augment: AugmentSection {
            preset: Preset::E,
            enabled: BTreeSet::new(),
            flip_prob: aug.flip_prob,
            cutout_fraction: aug.cutout_fraction,
            cutout_fill: aug.cutout_fill,
            augmix: aug.augmix,
        },
        model: ModelConfig {
            dims,
            backbone,
            dropblock: DropBlockParams::default(),
            ..Default::default()
        },
        train,
        eval: EvalSection {
            horizons: HorizonSpec::all(),
            otc: false,
            presets: Preset::ALL.to_vec(),
            formats: vec!["csv".into(), "json".into()],
            checkpoint: "final".into(),
        },
    };
    let mut v = Value::try_from(&cfg).expect("defaults serialize");
    remove(&mut v, &["augment", "enabled"]);
    remove(&mut v, &["train", "label_smoothing"]);
    v
}

fn remove(v: &mut Value, path: &[&str]) {
    if let Some((last, parents)) = path.split_last() {
        let mut cur = v;
        for p in parents {
            match cur.get_mut(*p) {
                Some(next) => cur = next,
                None => return,
            }
        }
        if let Some(t) = cur.as_table_mut() {
            t.remove(*last);
        }
    }
}

/// Recursive table merge; `over` wins on leaves.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses an override value as a TOML literal, falling back to a string.
pub fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// `a.b.c = value` as a nested table.
pub fn dotted(key: &str, value: Value) -> Result<Value> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut v = value;
    for p in parts.iter().rev() {
        let mut t = toml::Table::new();
        t.insert(p.to_string(), v);
        v = Value::Table(t);
    }
    Ok(v)
}

/// `key=value` pair from `--set`.
pub fn parse_set(s: &str) -> Result<Value> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    dotted(k.trim(), parse_value(v.trim()))
}

/// `MANEUVER_TRAIN__EPOCHS=3` sets `train.epochs`; double underscores
/// separate path segments.
pub fn env_overrides(vars: &[(String, String)]) -> Result<Vec<Value>> {
    let mut out = Vec::new();
    let mut sorted: Vec<&(String, String)> = vars.iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    sorted.sort();
    for (k, v) in sorted {
        let path = k[ENV_PREFIX.len()..].to_ascii_lowercase();
        if !path.contains("__") {
            continue;
        }
        out.push(dotted(&path.replace("__", "."), parse_value(v))?);
    }
    Ok(out)
}

/// Applies the layers and fills preset-derived values.
pub fn resolve(profile: Profile, file: Option<&str>, layers: Vec<Value>) -> Result<ExperimentConfig> {
    let mut v = defaults(profile);
    if let Some(text) = file {
        let parsed: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(one_line(&e.to_string())))?;
        merge(&mut v, Value::Table(parsed));
    }
    for layer in layers {
        merge(&mut v, layer);
    }
    let preset: Preset = match v.get("augment").and_then(|a| a.get("preset")) {
        Some(Value::String(s)) => s.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
        Some(other) => return Err(Error::Config(format!("augment.preset must be a letter, got {other}"))),
        None => Preset::E,
    };
    let t = v.as_table_mut().expect("config root is a table");
    let aug = t
        .entry("augment")
        .or_insert_with(|| Value::Table(Default::default()))
        .as_table_mut()
        .ok_or_else(|| Error::Config("augment must be a table".into()))?;
    if !aug.contains_key("enabled") {
        let ops = Value::try_from(preset.ops()).expect("ops serialize");
        aug.insert("enabled".into(), ops);
    }
    let train = t
        .entry("train")
        .or_insert_with(|| Value::Table(Default::default()))
        .as_table_mut()
        .ok_or_else(|| Error::Config("train must be a table".into()))?;
    if !train.contains_key("label_smoothing") {
        train.insert("label_smoothing".into(), Value::Float(preset.label_smoothing()));
    }
    let cfg: ExperimentConfig = v
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(one_line(&e.to_string())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn one_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" | ")
}
