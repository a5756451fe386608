//! Run configuration loaded from TOML, run manifests and evaluation suites.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationConfig, Stage};
use crate::closed_loop::ClosedLoopConfig;
use crate::error::{Error, Result};
use crate::model::{ArchConfig, ModelConfig};
use crate::frontend::FrontendConfig;
use crate::scene::scenario::{make_scenario, ScenarioKind, ScenarioSpec};
use crate::scene::trace::fnv1a64;
use crate::training::TrainingConfig;

pub const SEED_ENV: &str = "REASONPLAN_SEED";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub scenarios: Vec<String>,
    pub seeds: Vec<u64>,
    pub stages: Vec<Stage>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scenarios: ScenarioKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            seeds: vec![0],
            stages: Stage::ALL.to_vec(),
        }
    }
}

impl DataConfig {
    pub fn specs(&self) -> Result<Vec<ScenarioSpec>> {
        let mut out = Vec::new();
        for name in &self.scenarios {
            let kind: ScenarioKind = name.parse()?;
            out.extend(self.seeds.iter().map(|&s| make_scenario(kind, s)));
        }
        if out.is_empty() {
            return Err(Error::Empty("scenario list"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Seed of every scenario in the `dev` suite.
    pub dev_seed: u64,
    /// Seeds per scenario in the `full` suite.
    pub full_seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { dev_seed: 0, full_seeds: (0..5).collect() }
    }
}

/// `dev`: every library scenario once. `full`: every scenario per seed.
pub fn suite(name: &str, eval: &EvalConfig) -> Result<Vec<ScenarioSpec>> {
    match name {
        "dev" => Ok(ScenarioKind::ALL.iter().map(|&k| make_scenario(k, eval.dev_seed)).collect()),
        "full" => Ok(ScenarioKind::ALL
            .iter()
            .flat_map(|&k| eval.full_seeds.iter().map(move |&s| make_scenario(k, s)))
            .collect()),
        other => other
            .split(',')
            .map(|n| Ok(make_scenario(n.trim().parse()?, eval.dev_seed)))
            .collect(),
    }
}

/// Overfit-then-drive: a small dataset from one scenario, both training
/// stages, then closed-loop driving on the same scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub scenario_seed: u64,
    pub records: usize,
    pub stride: usize,
    pub stages: Vec<Stage>,
    pub arch: ArchConfig,
    pub stage1: TrainingConfig,
    pub stage2: TrainingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let frontend = FrontendConfig { d_p: 128, ..FrontendConfig::default() };
        let model = ModelConfig { heads: 4, ..ModelConfig::default() };
        Self {
            scenario: ScenarioKind::PedestrianCrossing.name().to_string(),
            scenario_seed: 0,
            records: 64,
            stride: 4,
            stages: Stage::ALL.to_vec(),
            arch: ArchConfig { frontend, model },
            stage1: TrainingConfig { stage: 1, lr: 2e-3, ..TrainingConfig::default() },
            stage2: TrainingConfig {
                stage: 2,
                lr: 2e-3,
                lr_final: Some(2e-5),
                batch_size: 8,
                max_steps: Some(500),
                ..TrainingConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub lambda_image: Vec<f64>,
    /// DS points by which NSP-off may beat NSP-on before the directional
    /// check is flagged.
    pub noise_bound: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { lambda_image: vec![0.0, 0.25, 0.5, 1.0, 2.0], noise_bound: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct Config {
    pub seed: u64,
    pub data: DataConfig,
    pub annotation: AnnotationConfig,
    pub arch: ArchConfig,
    pub training: TrainingConfig,
    pub closed_loop: ClosedLoopConfig,
    pub eval: EvalConfig,
    pub experiment: ExperimentConfig,
    pub ablation: AblationConfig,
}


impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` when given, else defaults; then applies the seed
    /// override from the environment and validates.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV} is not an integer: `{v}`")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.frontend.validate()?;
        self.training.validate()?;
        self.closed_loop.validate()?;
        self.experiment.stage1.validate()?;
        self.experiment.stage2.validate()?;
        if self.experiment.records == 0 || self.experiment.stride == 0 {
            return Err(Error::Config("experiment needs records and a positive stride".into()));
        }
        self.experiment.scenario.parse::<ScenarioKind>()?;
        for n in &self.data.scenarios {
            n.parse::<ScenarioKind>()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// FNV-1a of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        fnv1a64(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn hex(h: u64) -> String {
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub dataset_hash: Option<String>,
    pub checkpoint_hash: Option<String>,
    pub code_version: String,
    pub wall_time_s: f64,
    pub config: Config,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, wall: Duration) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            config_hash: hex(config.hash()),
            dataset_hash: None,
            checkpoint_hash: None,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: wall.as_secs_f64(),
            config: config.clone(),
        }
    }

    /// Writes `<artifact>.manifest.json` next to the artifact.
    pub fn write_beside(&self, artifact: &Path) -> Result<std::path::PathBuf> {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = artifact.with_file_name(name);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(path)?)?;
        let found = v.get("schema_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if found != MANIFEST_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { expected: MANIFEST_SCHEMA_VERSION, found });
        }
        Ok(serde_json::from_value(v)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("seed = 1\nbogus = 2").is_err());
        assert!(Config::from_toml("[training]\nlr = 1e-3\nlearning_rate = 2").is_err());
        assert!(Config::from_toml("[closed_loop.penalties]\nred_light = 0.5").is_ok());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = Config::from_toml("[training]\nlambda_image = 0.5").unwrap();
        assert_eq!(cfg.training.lambda_image, 0.5);
        assert_eq!(cfg.training.lr, TrainingConfig::default().lr);
    }

    #[test]
    fn suites() {
        let eval = EvalConfig::default();
        assert_eq!(suite("dev", &eval).unwrap().len(), 10);
        assert_eq!(suite("full", &eval).unwrap().len(), 50);
        assert_eq!(suite("merge,overtake", &eval).unwrap().len(), 2);
        assert!(suite("nowhere", &eval).is_err());
    }
}
