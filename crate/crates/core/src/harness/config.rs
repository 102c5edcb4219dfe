//! Experiment configuration: a TOML file plus `--set key=value` overrides.

use crate::error::{Error, Result};
use crate::shots::NoisePreset;
use crate::tasks::Variant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "qml")]
    Qml,
    #[serde(rename = "qt")]
    Qt,
    #[serde(rename = "qpa-gen")]
    QpaGen,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Qml => "qml",
            TaskKind::Qt => "qt",
            TaskKind::QpaGen => "qpa-gen",
        }
    }
}

/// Architecture and schedule knobs that only some tasks consume. Anything
/// left unset falls back to the task default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchOverrides {
    pub var_layers: Option<usize>,
    pub ansatz_layers: Option<usize>,
    pub nqs_hidden: Option<usize>,
    pub qt_target: Option<String>,
    pub bond_g: Option<usize>,
    pub bond_h: Option<usize>,
    pub steps_per_epoch: Option<usize>,
    pub n_probe: Option<usize>,
    pub weight_decay: Option<f64>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub variant: String,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_noise")]
    pub noise: String,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub shot_multiplier: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub arch: ArchOverrides,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_noise() -> String {
    "ideal".to_string()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one value".into()));
        }
        Variant::parse(&self.variant)?;
        if NoisePreset::builtin(&self.noise).is_none() {
            return Err(Error::Config(format!(
                "unknown noise preset '{}' (expected ideal, noisy-a, or noisy-b)",
                self.noise
            )));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Panics if called before `validate`.
    pub fn variant(&self) -> Variant {
        Variant::parse(&self.variant).expect("validated variant")
    }

    /// Panics if called before `validate`.
    pub fn noise_preset(&self) -> NoisePreset {
        NoisePreset::builtin(&self.noise).expect("validated noise preset")
    }

    /// Content hash of the resolved configuration (overrides included), so
    /// records written from equivalent invocations match.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load_config(path: &Path, sets: &[String]) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config(&text, sets)
}

/// Parse TOML text, splice in dotted-path overrides, then deserialize
/// strictly (unknown keys anywhere are an error).
pub fn parse_config(text: &str, sets: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table =
        text.parse().map_err(|e| Error::Config(format!("config parse: {e}")))?;
    for spec in sets {
        apply_set(&mut table, spec)?;
    }
    let config: ExperimentConfig =
        toml::Value::Table(table).try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn apply_set(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let key = key.trim();
    let mut parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key '{key}' has an empty segment")));
    }
    let leaf = parts.pop().expect("split yields at least one part");
    let mut cursor = table;
    for part in parts {
        cursor = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::Config(format!("override '{key}' descends into non-table '{part}'"))
            })?;
    }
    cursor.insert(leaf.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

/// Values are parsed with TOML literal syntax; anything that does not parse
/// (e.g. a bare word) is taken as a string.
fn parse_override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
task = "qml"
variant = "hpqs_finite"
seeds = [0, 1, 2]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(BASE, &[]).unwrap();
        assert_eq!(c.task, TaskKind::Qml);
        assert_eq!(c.variant(), Variant::HpqsFinite);
        assert_eq!(c.noise, "ideal");
        assert_eq!(c.output_dir, PathBuf::from("runs"));
        assert_eq!(c.arch, ArchOverrides::default());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let sets = [
            "lambda=0.25".to_string(),
            "arch.var_layers = 2".to_string(),
            "noise=noisy-a".to_string(),
            "seeds=[7]".to_string(),
        ];
        let c = parse_config(BASE, &sets).unwrap();
        assert_eq!(c.lambda, Some(0.25));
        assert_eq!(c.arch.var_layers, Some(2));
        assert_eq!(c.noise_preset().p_ro, 0.02);
        assert_eq!(c.seeds, vec![7]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(BASE, &["learning_rte=0.1".to_string()]).unwrap_err();
        assert!(err.to_string().contains("learning_rte"), "{err}");
        assert!(parse_config("task = \"qml\"\nvariant = \"nqs\"\nseeds = [1]\nshots = 3", &[]).is_err());
    }

    #[test]
    fn invalid_settings_are_named() {
        let err = parse_config(BASE, &["noise=loud".to_string()]).unwrap_err();
        assert!(err.to_string().contains("loud"), "{err}");
        assert_eq!(err.exit_code(), 2);
        assert!(parse_config(BASE, &["seeds=[]".to_string()]).is_err());
        assert!(parse_config(BASE, &["lambda=1.5".to_string()]).is_err());
        assert!(parse_config(BASE, &["variant=rnn".to_string()]).is_err());
    }

    #[test]
    fn hash_tracks_content_not_invocation() {
        let a = parse_config(BASE, &["lambda=0.5".to_string()]).unwrap();
        let b = parse_config("lambda = 0.5\n task = \"qml\"\nvariant = \"hpqs_finite\"\nseeds = [0, 1, 2]", &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse_config(BASE, &["lambda=0.6".to_string()]).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn serialization_round_trips() {
        let sets = ["arch.qt_target=desk".to_string(), "epochs=4".to_string()];
        let a = parse_config(BASE, &sets).unwrap();
        let text = toml::to_string(&a).unwrap();
        let b = parse_config(&text, &[]).unwrap();
        assert_eq!(a, b);
    }
}
