//! Flat key-value experiment configs and sweep grids.
//!
//! ```text
//! # comments start with '#'
//! seed = 3                 # sets data.seed and train.seed
//! [data]
//! profile = step
//! num_labels = 100
//! [train]
//! weighting = target_margin:adaptive
//! ```
//!
//! `[section]` headers prefix the keys that follow, so `lr = 0.1` under
//! `[train]` is the same as a top-level `train.lr = 0.1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::label_stats::{ImbalanceProfile, ProfileKind};
use crate::losses::LossSpec;
use crate::sampler::SamplerKind;
use crate::weighting::WeightSpec;

use super::data::DataConfig;
use super::model::ModelKind;
use super::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
}

/// Parses `key = value` lines into a map of fully qualified keys.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Config(format!("line {}: unterminated section header", n + 1)))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        if map.insert(full.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {full}", n + 1)));
        }
    }
    Ok(map)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply(&parse_key_values(text)?)?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.train.seed = seed;
    }

    /// Applies overrides; unknown keys are errors.
    pub fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        if let Some(v) = map.get("seed") {
            self.set_seed(parse_value("seed", v)?);
        }
        for (key, v) in map {
            let v = v.as_str();
            let k = key.as_str();
            match k {
                "seed" => {}
                "data.profile" => self.data.profile.kind = parse_value::<ProfileKind>(k, v)?,
                "data.num_labels" => self.data.profile.num_labels = parse_value(k, v)?,
                "data.imbalance_ratio" => self.data.profile.imbalance_ratio = parse_value(k, v)?,
                "data.dim" => self.data.dim = parse_value(k, v)?,
                "data.train_size" => self.data.train_size = parse_value(k, v)?,
                "data.test_per_class" => self.data.test_per_class = parse_value(k, v)?,
                "data.noise_scale" => self.data.noise_scale = parse_value(k, v)?,
                "data.seed" => self.data.seed = parse_value(k, v)?,
                "data.slice_hi" => self.data.thresholds.hi = parse_value(k, v)?,
                "data.slice_lo" => self.data.thresholds.lo = parse_value(k, v)?,
                "model.kind" => self.train.model = v.parse::<ModelKind>()?,
                "train.loss" => self.train.loss = v.parse::<LossSpec>()?,
                "train.sampler" => self.train.sampler = SamplerKind::parse(v)?,
                "train.exclude_positive" => self.train.exclude_positive = parse_bool(k, v)?,
                "train.weighting" => self.train.weighting = v.parse::<WeightSpec>()?,
                "train.weight_q" => self.train.weight_q = v.parse()?,
                "train.m" => self.train.m = parse_value(k, v)?,
                "train.enumerate_negatives" => self.train.enumerate_negatives = parse_bool(k, v)?,
                "train.lr" => self.train.lr = parse_value(k, v)?,
                "train.momentum" => self.train.momentum = parse_value(k, v)?,
                "train.epochs" => self.train.epochs = parse_value(k, v)?,
                "train.batch_size" => self.train.batch_size = parse_value(k, v)?,
                "train.seed" => self.train.seed = parse_value(k, v)?,
                _ => return Err(Error::Config(format!("unknown key {key}"))),
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let p: &ImbalanceProfile = &self.data.profile;
        if p.num_labels < 2 {
            return Err(Error::Config(format!("need at least 2 labels, got {}", p.num_labels)));
        }
        if !(p.imbalance_ratio >= 1.0) {
            return Err(Error::Config(format!("imbalance ratio must be >= 1, got {}", p.imbalance_ratio)));
        }
        if self.data.thresholds.lo > self.data.thresholds.hi {
            return Err(Error::Config("slice_lo must not exceed slice_hi".into()));
        }
        if matches!(self.train.sampler, SamplerKind::Custom(_)) {
            return Err(Error::Config("custom samplers cannot be configured from text".into()));
        }
        self.train.validate(p.num_labels)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let d = &self.data;
        let t = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "[data]");
        let _ = writeln!(s, "profile = {}", d.profile.kind);
        let _ = writeln!(s, "num_labels = {}", d.profile.num_labels);
        let _ = writeln!(s, "imbalance_ratio = {}", d.profile.imbalance_ratio);
        let _ = writeln!(s, "dim = {}", d.dim);
        let _ = writeln!(s, "train_size = {}", d.train_size);
        let _ = writeln!(s, "test_per_class = {}", d.test_per_class);
        let _ = writeln!(s, "noise_scale = {}", d.noise_scale);
        let _ = writeln!(s, "seed = {}", d.seed);
        let _ = writeln!(s, "slice_hi = {}", d.thresholds.hi);
        let _ = writeln!(s, "slice_lo = {}", d.thresholds.lo);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "kind = {}", t.model);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "loss = {}", t.loss);
        let _ = writeln!(s, "sampler = {}", t.sampler.name());
        let _ = writeln!(s, "exclude_positive = {}", t.exclude_positive);
        let _ = writeln!(s, "weighting = {}", t.weighting);
        let _ = writeln!(s, "weight_q = {}", t.weight_q);
        let _ = writeln!(s, "m = {}", t.m);
        let _ = writeln!(s, "enumerate_negatives = {}", t.enumerate_negatives);
        let _ = writeln!(s, "lr = {}", t.lr);
        let _ = writeln!(s, "momentum = {}", t.momentum);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "seed = {}", t.seed);
        s
    }
}

/// A base config plus lists of samplers, weightings and `m` values.
///
/// The `[grid]` section holds comma-separated lists; every other key is a
/// base-config override. Configs are enumerated sampler-major, then
/// weighting, then `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub base: ExperimentConfig,
    pub samplers: Vec<SamplerKind>,
    pub weightings: Vec<WeightSpec>,
    pub ms: Vec<usize>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = parse_key_values(text)?;
        let mut take = |key: &str| map.remove(key);
        let list = |v: Option<String>| -> Vec<String> { v.map(|s| s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()).unwrap_or_default() };
        let samplers = list(take("grid.sampler"));
        let weightings = list(take("grid.weighting"));
        let ms = list(take("grid.m"));
        if let Some(k) = map.keys().find(|k| k.starts_with("grid.")) {
            return Err(Error::Config(format!("unknown grid key {k}; expected sampler, weighting or m")));
        }
        let mut base = ExperimentConfig::default();
        base.apply(&map)?;
        let samplers = if samplers.is_empty() { vec![base.train.sampler.clone()] } else { samplers.iter().map(|s| SamplerKind::parse(s)).collect::<Result<_>>()? };
        let weightings = if weightings.is_empty() { vec![base.train.weighting] } else { weightings.iter().map(|s| s.parse()).collect::<Result<_>>()? };
        let ms = if ms.is_empty() { vec![base.train.m] } else { ms.iter().map(|s| parse_value("grid.m", s)).collect::<Result<_>>()? };
        Ok(Self { base, samplers, weightings, ms })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::with_capacity(self.samplers.len() * self.weightings.len() * self.ms.len());
        for s in &self.samplers {
            for w in &self.weightings {
                for &m in &self.ms {
                    let mut c = self.base.clone();
                    c.train.sampler = s.clone();
                    c.train.weighting = *w;
                    c.train.m = m;
                    out.push(c);
                }
            }
        }
        out
    }
}
