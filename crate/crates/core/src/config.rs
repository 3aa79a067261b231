//! Operator configuration file (TOML).

use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use hefuse_ckks::{CkksContext, PackedLayout, Preset};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchConfig;
use crate::biometric::{Modality, ModalityNoise, SyntheticConfig};
use crate::matcher::{MatchPolicy, PolicyKind};
use crate::protocol::ServerConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported config schema version {0}")]
    SchemaVersion(u32),
    #[error("unknown parameter preset {0:?}")]
    UnknownPreset(String),
    #[error("incompatible configuration: {0}")]
    Incompatible(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub preset: String,
    pub seed: u64,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(default)]
    pub server: ServerSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// `amb-fhe-1`, `amb-fhe-2` or `multi-and`.
    pub kind: String,
    /// Dissimilarity thresholds, one per stage. Empty means "calibrate".
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// FMR target in percent used when thresholds are calibrated.
    #[serde(default = "default_fmr_percent")]
    pub fmr_percent: f64,
}

fn default_fmr_percent() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub keys: PathBuf,
    pub store: PathBuf,
    pub dataset: PathBuf,
    pub scores: PathBuf,
    pub reports: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            keys: "keys".into(),
            store: "references.log".into(),
            dataset: "synthetic.afds".into(),
            scores: "scores.csv".into(),
            reports: "reports".into(),
        }
    }
}

type PathField = fn(&mut PathsConfig) -> &mut PathBuf;

/// Environment variables that override path entries.
pub const PATH_ENV: [(&str, PathField); 5] = [
    ("HEFUSE_KEYS", |p| &mut p.keys),
    ("HEFUSE_STORE", |p| &mut p.store),
    ("HEFUSE_DATASET", |p| &mut p.dataset),
    ("HEFUSE_SCORES", |p| &mut p.scores),
    ("HEFUSE_REPORTS", |p| &mut p.reports),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub n_subjects: usize,
    pub template_len: usize,
    pub samples_min: usize,
    pub samples_max: usize,
    pub iris_sigma: f64,
    pub fingerprint_sigma: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let d = SyntheticConfig::default();
        let sigma = |m| d.modalities.iter().find(|n| n.modality == m).map(|n| n.sigma).unwrap();
        Self {
            n_subjects: d.n_subjects,
            template_len: d.template_len,
            samples_min: d.samples_min,
            samples_max: d.samples_max,
            iris_sigma: sigma(Modality::Iris),
            fingerprint_sigma: sigma(Modality::Fingerprint),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServerSection {
    pub listen: String,
    pub retry_limit: usize,
    pub retry_window_secs: u64,
}

impl Default for ServerSection {
    fn default() -> Self {
        let d = ServerConfig::default();
        Self {
            listen: "127.0.0.1:7878".into(),
            retry_limit: d.retry_limit,
            retry_window_secs: d.retry_window.as_secs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub iterations: usize,
    pub warmups: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        let d = BenchConfig::default();
        Self {
            iterations: d.iterations,
            warmups: d.warmups,
        }
    }
}

impl Config {
    /// A complete configuration with every default filled in.
    pub fn example(preset: Preset) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            preset: preset.name().to_string(),
            seed: 42,
            policy: PolicyConfig {
                kind: PolicyKind::AmbFhe1.name().to_string(),
                thresholds: Vec::new(),
                fmr_percent: default_fmr_percent(),
            },
            paths: PathsConfig::default(),
            synthetic: SyntheticSection::default(),
            server: ServerSection::default(),
            bench: BenchSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, then applies path overrides from the environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::parse(&fs::read_to_string(path)?)?;
        cfg.apply_env(|k| env::var_os(k));
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<std::ffi::OsString>) {
        for (key, field) in PATH_ENV {
            if let Some(v) = lookup(key) {
                *field(&mut self.paths) = v.into();
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn preset(&self) -> Result<Preset, ConfigError> {
        Preset::from_name(&self.preset).ok_or_else(|| ConfigError::UnknownPreset(self.preset.clone()))
    }

    pub fn policy_kind(&self) -> Result<PolicyKind, ConfigError> {
        self.policy
            .kind
            .parse()
            .map_err(|_| ConfigError::Incompatible(format!("unknown policy {:?}", self.policy.kind)))
    }

    /// Policy from the configured thresholds, if any were given.
    pub fn fixed_policy(&self) -> Result<Option<MatchPolicy>, ConfigError> {
        if self.policy.thresholds.is_empty() {
            return Ok(None);
        }
        self.policy_kind()?
            .with_thresholds(self.policy.thresholds.clone())
            .map(Some)
            .map_err(|e| ConfigError::Incompatible(e.to_string()))
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        let s = &self.synthetic;
        SyntheticConfig {
            n_subjects: s.n_subjects,
            template_len: s.template_len,
            samples_min: s.samples_min,
            samples_max: s.samples_max,
            modalities: vec![
                ModalityNoise {
                    modality: Modality::Iris,
                    sigma: s.iris_sigma,
                },
                ModalityNoise {
                    modality: Modality::Fingerprint,
                    sigma: s.fingerprint_sigma,
                },
            ],
            seed: self.seed,
        }
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            retry_limit: self.server.retry_limit,
            retry_window: Duration::from_secs(self.server.retry_window_secs),
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            iterations: self.bench.iterations,
            warmups: self.bench.warmups,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(self.schema_version));
        }
        let preset = self.preset()?;
        let kind = self.policy_kind()?;
        self.fixed_policy()?;
        let fmr = self.policy.fmr_percent;
        if !(fmr > 0.0 && fmr < 100.0) {
            return Err(ConfigError::Incompatible(format!("fmr_percent {fmr} outside (0, 100)")));
        }
        self.synthetic_config()
            .validate()
            .map_err(|e| ConfigError::Incompatible(e.to_string()))?;
        let ctx = CkksContext::new(preset.params()).map_err(|e| ConfigError::Incompatible(e.to_string()))?;
        PackedLayout::new(self.synthetic.template_len, kind.order().len(), ctx.slot_count()).map_err(|_| {
            ConfigError::Incompatible(format!(
                "preset {} has {} slots, too few for {} templates of length {}",
                self.preset,
                ctx.slot_count(),
                kind.order().len(),
                self.synthetic.template_len
            ))
        })?;
        if self.server.retry_limit == 0 {
            return Err(ConfigError::Incompatible("retry_limit must be positive".into()));
        }
        if self.bench.iterations == 0 {
            return Err(ConfigError::Incompatible("bench iterations must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips() {
        let cfg = Config::example(Preset::Pn12Qp109);
        assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn missing_required_key() {
        let err = Config::parse("schema_version = 1\npreset = \"PN12QP109\"\n[policy]\nkind = \"amb-fhe-1\"\n");
        assert!(matches!(err, Err(ConfigError::Parse(_))));
    }

    #[test]
    fn toy_preset_too_small_for_default_templates() {
        let mut cfg = Config::example(Preset::Toy);
        cfg.synthetic.template_len = 512;
        assert!(matches!(cfg.validate(), Err(ConfigError::Incompatible(_))));
    }

    #[test]
    fn env_overrides_paths_only() {
        let mut cfg = Config::example(Preset::Pn12Qp109);
        cfg.apply_env(|k| (k == "HEFUSE_STORE").then(|| "/tmp/x.log".into()));
        assert_eq!(cfg.paths.store, PathBuf::from("/tmp/x.log"));
        assert_eq!(cfg.paths.keys, PathBuf::from("keys"));
    }
}
