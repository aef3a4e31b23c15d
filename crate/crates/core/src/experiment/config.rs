use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::nn::{Architecture, TrainConfig};
use crate::rng::derive_seed;
use crate::signal::PayloadKind;

/// Every random stream of a run has its own explicit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub profile: u64,
    pub channel: u64,
    pub schedule: u64,
    pub noise: u64,
    pub train: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            profile: 1,
            channel: 2,
            schedule: 3,
            noise: 4,
            train: 5,
        }
    }
}

impl Seeds {
    /// Independent seeds for study replicate `r`.
    pub fn replicate(&self, r: usize) -> Self {
        let d = |s: u64| derive_seed(&[s, r as u64, 0x5eed]);
        Self {
            profile: d(self.profile),
            channel: d(self.channel),
            schedule: d(self.schedule),
            noise: d(self.noise),
            train: d(self.train),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    /// Five 64..128-channel conv stages and dense widths 256..32.
    Default,
    /// Quarter-width variant used by the multi-seed studies.
    Compact,
}

impl ArchKind {
    pub fn build(self, n_classes: usize) -> Architecture {
        match self {
            ArchKind::Default => Architecture::default_for(n_classes),
            ArchKind::Compact => Architecture::compact_for(n_classes),
        }
    }
}

fn default_train() -> TrainConfig {
    TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    }
}

/// One experiment, read from a JSON file with these field names. Missing
/// fields take the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_emitters: usize,
    pub packets_per_emitter: usize,
    pub payload_kind: PayloadKind,
    pub scenario: Scenario,
    pub snr_db: f64,
    pub amplitude_range: [f64; 2],
    pub seeds: Seeds,
    /// Generate the dataset after one change of the room.
    pub env_change: bool,
    /// Radios with IQ imbalance and DC offset calibrated out.
    pub calibrated: bool,
    pub arch: ArchKind,
    pub train: TrainConfig,
    /// Seeds per study cell; study orderings compare means.
    pub replicates: usize,
    /// Where datasets, checkpoints and tables go.
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_emitters: 8,
            packets_per_emitter: 2000,
            payload_kind: PayloadKind::Static,
            scenario: Scenario::Plain,
            snr_db: 20.0,
            amplitude_range: [0.2, 1.0],
            seeds: Seeds::default(),
            env_change: false,
            calibrated: true,
            arch: ArchKind::Default,
            train: default_train(),
            replicates: 3,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    /// The paper's scale: 21 emitters, 50000 packets each, 35 epochs.
    pub fn full_scale() -> Self {
        Self {
            n_emitters: 21,
            packets_per_emitter: 50_000,
            train: TrainConfig::default(),
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_emitters < 2 || self.n_emitters > 256 {
            return Err(Error::invalid(format!(
                "n_emitters {} must be in 2..=256",
                self.n_emitters
            )));
        }
        if self.packets_per_emitter == 0 || self.replicates == 0 {
            return Err(Error::invalid(
                "packet and replicate counts must be positive",
            ));
        }
        self.scenario_config().validate()?;
        self.train.validate()
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            scenario: self.scenario,
            amplitude_range: self.amplitude_range,
            snr_db: self.snr_db,
            seed: self.seeds.channel,
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.arch.build(self.n_emitters)
    }

    /// The fields that determine a generated dataset.
    pub fn generation_key(&self) -> GenerationKey {
        GenerationKey {
            n_emitters: self.n_emitters,
            packets_per_emitter: self.packets_per_emitter,
            payload_kind: self.payload_kind,
            scenario: self.scenario,
            snr_db: self.snr_db,
            amplitude_range: self.amplitude_range,
            profile_seed: self.seeds.profile,
            channel_seed: self.seeds.channel,
            schedule_seed: self.seeds.schedule,
            noise_seed: self.seeds.noise,
            env_change: self.env_change,
            calibrated: self.calibrated,
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out_dir
            .join("datasets")
            .join(hash_hex(&self.generation_key()))
    }

    /// Checkpoint directory for this config's dataset, architecture and
    /// training recipe.
    pub fn model_dir(&self) -> PathBuf {
        let key = (
            self.generation_key(),
            self.architecture(),
            &self.train,
            self.seeds.train,
        );
        self.out_dir.join("models").join(hash_hex(&key))
    }
}

/// Serializable identity of a dataset; its hash names the cache directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationKey {
    pub n_emitters: usize,
    pub packets_per_emitter: usize,
    pub payload_kind: PayloadKind,
    pub scenario: Scenario,
    pub snr_db: f64,
    pub amplitude_range: [f64; 2],
    pub profile_seed: u64,
    pub channel_seed: u64,
    pub schedule_seed: u64,
    pub noise_seed: u64,
    pub env_change: bool,
    pub calibrated: bool,
}

/// First 16 hex digits of the SHA-256 of the value's JSON form.
pub fn hash_hex<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("plain data serializes");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
