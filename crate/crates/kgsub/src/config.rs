//! Run configuration: a TOML file with `data`, `model`, `loss`,
//! `subsampling` and `trainer` sections. Unknown keys are rejected.
//!
//! Any key can be overridden from the command line as
//! `--section.key=value`; the value is read as a TOML value and falls back
//! to a plain string.

use std::fs;
use std::path::{Path, PathBuf};

use kgsub_core::optim::OptimizerKind;
use kgsub_core::{DuplicatePolicy, LossConfig, ModelKind, NoiseConfig, Norm, SchemeKind, SubsamplingScheme};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{DataPaths, LoadOptions};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub subsampling: SubsamplingSection,
    #[serde(default)]
    pub trainer: TrainConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `train.txt`, `valid.txt`, `test.txt` and optional
    /// `entities.dict` / `relations.dict`.
    pub dir: Option<PathBuf>,
    /// Explicit file paths; each one overrides the file found in `dir`.
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    #[serde(default)]
    pub duplicates: Duplicates,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Duplicates {
    #[default]
    Error,
    Dedupe,
}

impl DataConfig {
    /// Resolves paths relative to `base` (the config file's directory).
    pub fn paths(&self, base: &Path) -> Result<DataPaths> {
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        let mut paths = match &self.dir {
            Some(dir) => DataPaths::in_dir(&resolve(dir)),
            None => {
                let train = self
                    .train
                    .as_ref()
                    .ok_or_else(|| Error::Config("data: either `dir` or `train` must be set".into()))?;
                DataPaths { train: resolve(train), valid: None, test: None, entities: None, relations: None }
            }
        };
        if let Some(p) = &self.train {
            paths.train = resolve(p);
        }
        for (slot, value) in [
            (&mut paths.valid, &self.valid),
            (&mut paths.test, &self.test),
            (&mut paths.entities, &self.entities),
            (&mut paths.relations, &self.relations),
        ] {
            if let Some(p) = value {
                *slot = Some(resolve(p));
            }
        }
        Ok(paths)
    }

    pub fn load_options(&self) -> LoadOptions {
        let duplicates = match self.duplicates {
            Duplicates::Error => DuplicatePolicy::Error,
            Duplicates::Dedupe => DuplicatePolicy::Dedupe,
        };
        LoadOptions { duplicates }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    TransE,
    DistMult,
    #[default]
    ComplEx,
    RotatE,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormName {
    #[default]
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelName,
    /// Entity row width; complex models need an even value.
    pub dim: usize,
    /// TransE distance.
    pub norm: NormName,
    /// Uniform init half-width; defaults to `(gamma + init_epsilon) / dim`.
    pub init_range: Option<f64>,
    pub init_epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: ModelName::default(), dim: 100, norm: NormName::default(), init_range: None, init_epsilon: 2.0 }
    }
}

impl ModelConfig {
    pub fn init_range(&self, gamma: f64) -> f64 {
        self.init_range.unwrap_or((gamma + self.init_epsilon) / self.dim as f64)
    }

    pub fn model_kind(&self, gamma: f64) -> ModelKind {
        match self.kind {
            ModelName::TransE => ModelKind::TransE {
                norm: match self.norm {
                    NormName::L1 => Norm::L1,
                    NormName::L2 => Norm::L2,
                },
            },
            ModelName::DistMult => ModelKind::DistMult,
            ModelName::ComplEx => ModelKind::ComplEx,
            ModelName::RotatE => ModelKind::rotate_for_range(self.init_range(gamma)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub gamma: f64,
    /// Negatives per positive example.
    pub negatives: usize,
    /// Self-adversarial temperature; `0` disables it.
    pub sans_alpha: f64,
    pub filter_false_negatives: bool,
}

impl Default for LossSection {
    fn default() -> Self {
        Self { gamma: 0.0, negatives: 1, sans_alpha: 0.0, filter_false_negatives: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsamplingSection {
    pub kind: SchemeKind,
    pub exponent: f64,
}

impl Default for SubsamplingSection {
    fn default() -> Self {
        Self { kind: SchemeKind::None, exponent: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerName,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiply the learning rate by `lr_decay` every `lr_decay_every`
    /// steps; `0` keeps it constant.
    pub lr_decay: f64,
    pub lr_decay_every: u64,
    /// Examples per step; every train triple gives two examples.
    pub batch_size: usize,
    pub max_steps: u64,
    /// Validation interval in steps; `0` disables validation.
    pub eval_every: u64,
    /// Stop after this many validations without a new best MRR; `0` never
    /// stops early.
    pub patience: u64,
    pub seed: u64,
    /// Threads for gradient and evaluation work. Results do not depend on it.
    pub workers: usize,
    /// Save a resumable state every this many steps (and always at the end);
    /// `0` saves only at the end.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerName::Adam,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_decay: 1.0,
            lr_decay_every: 0,
            batch_size: 512,
            max_steps: 1000,
            eval_every: 0,
            patience: 0,
            seed: 0,
            workers: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn optimizer_kind(&self) -> OptimizerKind {
        match self.optimizer {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::Adam => OptimizerKind::Adam { beta1: self.beta1, beta2: self.beta2, eps: self.epsilon },
        }
    }

    /// Learning rate in effect for step `step` (1-based).
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        if self.lr_decay_every == 0 {
            return self.learning_rate;
        }
        let decays = (step - 1) / self.lr_decay_every;
        self.learning_rate * self.lr_decay.powi(decays.min(i32::MAX as u64) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("trainer: {what}")));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return bad("lr_decay must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon < 0.0 {
            return bad("Adam needs 0 <= beta1, beta2 < 1 and epsilon >= 0");
        }
        Ok(())
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let config: Config = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`, applies `overrides` (each `section.key=value`) and
    /// validates the result.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            gamma: self.loss.gamma,
            scheme: SubsamplingScheme::new(self.subsampling.kind).with_exponent(self.subsampling.exponent),
            noise: NoiseConfig {
                nu: self.loss.negatives,
                sans_alpha: self.loss.sans_alpha,
                filter_false_negatives: self.loss.filter_false_negatives,
            },
        }
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model.model_kind(self.loss.gamma)
    }

    pub fn init_range(&self) -> f64 {
        self.model.init_range(self.loss.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let loss = self.loss_config();
        if !loss.gamma.is_finite() {
            return Err(Error::Config("loss: gamma must be finite".into()));
        }
        loss.noise.validate().map_err(|e| Error::Config(format!("loss: {e}")))?;
        loss.scheme.validate().map_err(|e| Error::Config(format!("subsampling: {e}")))?;
        self.model_kind().check_dim(self.model.dim).map_err(|e| Error::Config(format!("model: {e}")))?;
        let range = self.init_range();
        if !(range.is_finite() && range > 0.0) {
            return Err(Error::Config(format!("model: init range must be positive, got {range}")));
        }
        self.trainer.validate()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

/// Applies one `section.key=value` override to a raw TOML table.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let spec = spec.strip_prefix("--").unwrap_or(spec);
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form section.key=value")))?;
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key {key:?} must be section.key")))?;
    let value = parse_value(raw);
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{section}` is not a section"))),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrapper {
        v: toml::Value,
    }
    toml::from_str::<Wrapper>(&format!("v = {raw}")).map(|w| w.v).unwrap_or_else(|_| toml::Value::String(raw.into()))
}

/// Splits command-line arguments into ordinary ones and `--section.key=value`
/// overrides.
pub fn split_overrides(args: impl IntoIterator<Item = String>) -> (Vec<String>, Vec<String>) {
    args.into_iter().partition(|a| !is_override(a))
}

fn is_override(arg: &str) -> bool {
    arg.strip_prefix("--")
        .and_then(|rest| rest.split_once('='))
        .is_some_and(|(key, _)| key.contains('.') && !key.starts_with('-'))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\ndir = \"d\"\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let c = Config::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.trainer.batch_size, 512);
        assert_eq!(c.model.kind, ModelName::ComplEx);
        assert_eq!(c.subsampling.kind, SchemeKind::None);
        assert!((c.init_range() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = Config::from_toml_str("[data]\ndir = \"d\"\n[trainer]\nbatchsize = 3\n").unwrap_err();
        let msg = err.to_string();
        assert_eq!(err.exit_code(), 2);
        assert!(msg.contains("batchsize"), "{msg}");
        assert!(msg.contains("batch_size") && msg.contains("max_steps"), "{msg}");
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(Config::from_toml_str("[data]\ndir = \"d\"\n[optim]\nlr = 1\n").is_err());
    }

    #[test]
    fn overrides_are_typed() {
        let mut table: toml::Table = toml::from_str(MINIMAL).unwrap();
        apply_override(&mut table, "--subsampling.kind=freq").unwrap();
        apply_override(&mut table, "trainer.batch_size=8").unwrap();
        apply_override(&mut table, "loss.gamma=-1.5").unwrap();
        let c = Config::from_table(table).unwrap();
        assert_eq!(c.subsampling.kind, SchemeKind::Freq);
        assert_eq!(c.trainer.batch_size, 8);
        assert_eq!(c.loss.gamma, -1.5);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for bad in ["model.dim=7", "trainer.batch_size=0", "subsampling.exponent=0", "loss.negatives=0"] {
            let mut table: toml::Table = toml::from_str(MINIMAL).unwrap();
            apply_override(&mut table, bad).unwrap();
            assert!(matches!(Config::from_table(table), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn override_detection() {
        let args = ["train", "c.toml", "--trainer.seed=3", "--out=x", "--x"].map(String::from);
        let (plain, overrides) = split_overrides(args);
        assert_eq!(overrides, vec!["--trainer.seed=3"]);
        assert_eq!(plain.len(), 4);
    }

    #[test]
    fn toml_round_trip() {
        let c = Config::from_toml_str(MINIMAL).unwrap();
        assert_eq!(Config::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn step_decay() {
        let t = TrainConfig { learning_rate: 1.0, lr_decay: 0.5, lr_decay_every: 10, ..TrainConfig::default() };
        assert_eq!(t.learning_rate_at(1), 1.0);
        assert_eq!(t.learning_rate_at(10), 1.0);
        assert_eq!(t.learning_rate_at(11), 0.5);
        assert_eq!(t.learning_rate_at(25), 0.25);
    }
}
