use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::channel::{make_links, perturb_environment, ChannelState};
use crate::dataset::{
    read_manifest, DatasetMeta, DatasetWriter, Manifest, DEFAULT_WINDOW_LEN, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::framing::{
    schedule, transmit_packet, FrameLayout, HeaderStatus, Receiver, Reception, ScheduleEvent,
    TxContext, SLOT_S,
};
use crate::impairments::{read_profiles, sample_profiles, write_profiles, EmitterProfile};
use crate::rng::{derive_seed, stream};

pub const PROFILE_FILE: &str = "profiles.json";
pub const LINKS_FILE: &str = "links_final.json";
pub const RECEIVER_FILE: &str = "receiver.json";

/// What the receiver made of a generation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverStats {
    pub scheduled: usize,
    pub decoded: usize,
    pub header_failed: usize,
    pub no_frame: usize,
    /// Decoded id differs from the emitter that actually sent the packet.
    pub mismatched: usize,
}

impl ReceiverStats {
    pub fn header_failure_rate(&self) -> f64 {
        self.header_failed as f64 / self.scheduled.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct GenerationReport {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub stats: ReceiverStats,
    /// The dataset was already on disk.
    pub cached: bool,
}

pub fn profiles_for(cfg: &ExperimentConfig) -> Result<Vec<EmitterProfile>> {
    sample_profiles(
        cfg.n_emitters,
        cfg.calibrated,
        &mut stream(cfg.seeds.profile, 0),
    )
}

pub fn initial_links(
    cfg: &ExperimentConfig,
    profiles: &[EmitterProfile],
) -> Result<Vec<ChannelState>> {
    make_links(
        profiles,
        &cfg.scenario_config(),
        &mut stream(cfg.seeds.channel, 0),
    )
}

/// One room change applied to every link: delay and strength are shared,
/// the reflection phase differs per link.
pub fn perturb_links(links: &[ChannelState], channel_seed: u64) -> Vec<ChannelState> {
    let seed = derive_seed(&[channel_seed, 0xc4a1]);
    links
        .iter()
        .map(|l| perturb_environment(l, &mut stream(seed, 0)))
        .collect()
}

/// Runs the emitters over `links` for the configured duration, handing every
/// reception to `sink` together with the true event. Returns the final links.
pub fn simulate(
    cfg: &ExperimentConfig,
    profiles: &[EmitterProfile],
    mut links: Vec<ChannelState>,
    env_epoch: u32,
    mut sink: impl FnMut(&ScheduleEvent, Reception) -> Result<()>,
) -> Result<Vec<ChannelState>> {
    let layout = FrameLayout::default();
    let receiver = Receiver::new(layout)?;
    let scenario = cfg.scenario_config();
    let duration = (cfg.n_emitters * cfg.packets_per_emitter) as f64 * SLOT_S;
    let events = schedule(
        cfg.n_emitters,
        duration,
        &mut stream(derive_seed(&[cfg.seeds.schedule, env_epoch as u64]), 0),
    )?;
    let noise_seed = derive_seed(&[cfg.seeds.noise, env_epoch as u64]);
    for (k, event) in events.iter().enumerate() {
        let id = event.emitter_id as usize;
        let ctx = TxContext {
            profile: &profiles[id],
            scenario: &scenario,
            payload_kind: cfg.payload_kind,
            layout: &layout,
        };
        let mut rng = stream(noise_seed, k as u64);
        let (air, next) = transmit_packet(event, &ctx, &links[id], &mut rng)?;
        links[id] = next;
        sink(event, receiver.receive(&air, event.time_s)?)?;
    }
    Ok(links)
}

/// Generates (or finds in the cache) the dataset described by `cfg`.
pub fn run_generation(cfg: &ExperimentConfig) -> Result<GenerationReport> {
    cfg.validate()?;
    let dir = cfg.dataset_dir();
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(GenerationReport {
            manifest: read_manifest(&dir)?,
            stats: read_json(&dir.join(RECEIVER_FILE))?,
            dir,
            cached: true,
        });
    }

    let profiles = profiles_for(cfg)?;
    let (links, env_epoch) = if cfg.env_change {
        let base = ExperimentConfig {
            env_change: false,
            ..cfg.clone()
        };
        let before = run_generation(&base)?;
        let links: Vec<ChannelState> = read_json(&before.dir.join(LINKS_FILE))?;
        // The room changes after the first recording.
        let stored = read_profiles(&before.dir.join(PROFILE_FILE))?;
        if stored != profiles {
            return Err(Error::invalid("cached base dataset has different profiles"));
        }
        (perturb_links(&links, cfg.seeds.channel), 1)
    } else {
        (initial_links(cfg, &profiles)?, 0)
    };

    let tmp = dir.with_extension("partial");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    let meta = DatasetMeta {
        scenario: cfg.scenario,
        seed: cfg.seeds.noise,
        n_emitters: cfg.n_emitters,
        env_epoch,
        payload_kind: cfg.payload_kind,
        profile_file: PROFILE_FILE.into(),
        window_len: DEFAULT_WINDOW_LEN,
        config: serde_json::to_value(cfg.generation_key())?,
    };
    let mut writer = DatasetWriter::create(&tmp, meta)?;
    write_profiles(&tmp.join(PROFILE_FILE), &profiles)?;
    let mut stats = ReceiverStats::default();
    let final_links = simulate(cfg, &profiles, links, env_epoch, |event, reception| {
        stats.scheduled += 1;
        match reception {
            Reception::NoFrame => {
                stats.no_frame += 1;
                writer.record_no_frame();
                Ok(())
            }
            Reception::Packet(p) => {
                match p.emitter_id_decoded {
                    HeaderStatus::Decoded(id) => {
                        stats.decoded += 1;
                        if id != event.emitter_id {
                            stats.mismatched += 1;
                        }
                    }
                    HeaderStatus::HeaderFailed => stats.header_failed += 1,
                }
                writer.push(&p)
            }
        }
    })?;
    write_json(&tmp.join(LINKS_FILE), &final_links)?;
    write_json(&tmp.join(RECEIVER_FILE), &stats)?;
    writer.finish()?;
    if let Some(parent) = dir.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
    Ok(GenerationReport {
        manifest: read_manifest(&dir)?,
        dir,
        stats,
        cached: false,
    })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
