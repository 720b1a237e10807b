//! Experiment configuration: one JSON document with a section per stage.
//! Any key can be overridden with `section.key=value`, the value parsed as
//! JSON (falling back to a string).

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ablation::AblationConfig;
use super::data::SyntheticSpec;
use super::sweep::default_ber_grid;
use crate::splitmodel::Architecture;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub bers: Vec<f64>,
    /// Channel seeds.
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { bers: default_ber_grid(), seeds: vec![1, 2, 3, 4, 5] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: SyntheticSpec,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub ablation: AblationConfig,
}

impl ExperimentConfig {
    /// Reads `path` if given, then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut v = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", p.display())),
                    _ => Error::Io(e),
                })?;
                let partial: Self =
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::to_value(partial)?
            }
            None => serde_json::to_value(Self::default())?,
        };
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.arch.validate()?;
        self.train.validate()?;
        if self.arch.input_dim != self.data.input_dim || self.arch.classes != self.data.classes {
            return Err(Error::Config(format!(
                "arch expects {} inputs and {} classes, data has {} and {}",
                self.arch.input_dim, self.arch.classes, self.data.input_dim, self.data.classes
            )));
        }
        if self.sweep.bers.is_empty() || self.sweep.seeds.is_empty() {
            return Err(Error::Config("sweep needs BER values and seeds".into()));
        }
        if let Some(b) = self.sweep.bers.iter().find(|b| !(0.0..0.5).contains(*b)) {
            return Err(Error::Config(format!("sweep BER {b} outside [0, 0.5)")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Sets `a.b.c=value` in a JSON tree. Only existing keys can be set.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| Error::Config(format!("{path}: {key} is not inside a section")))?;
        let slot = obj.get_mut(*key).ok_or_else(|| Error::Config(format!("unknown config key {path}")))?;
        if i + 1 == keys.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(Error::Config(format!("empty override key in {spec:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_apply_and_check_keys() {
        let c = ExperimentConfig::load(None, &["train.epochs=3".into(), "sweep.seeds=[9]".into()]).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.sweep.seeds, vec![9]);
        assert!(ExperimentConfig::load(None, &["train.nope=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["train.epochs".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["train.epochs=0".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["arch.classes=4".into()]).is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"train": {"seed": 5}}"#).unwrap();
        let c = ExperimentConfig::load(Some(&p), &["train.seed=6".into()]).unwrap();
        assert_eq!(c.train.seed, 6);
        assert_eq!(c.data, SyntheticSpec::default());
        assert!(matches!(ExperimentConfig::load(Some(&dir.path().join("x.json")), &[]), Err(Error::Config(_))));
        std::fs::write(&p, r#"{"trian": {}}"#).unwrap();
        assert!(ExperimentConfig::load(Some(&p), &[]).is_err());
    }
}
