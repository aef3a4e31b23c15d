//! Propagation between each emitter and the receiver.
//!
//! Every link is a short complex FIR with an exponentially decaying power
//! profile and a per-link path gain. The three scenarios differ in what is
//! randomized: nothing (`Plain`), the emitted amplitude per payload
//! (`VaryingAmplitude`), or additionally one reflection that wanders from
//! packet to packet (`Robot`). [`perturb_environment`] models a one-off change
//! of the room shared by every link.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impairments::EmitterProfile;
use crate::rng::{derive_seed, stream, RandomStream};
use crate::signal::IqBuffer;

pub const DEFAULT_TAP_COUNT: usize = 4;
pub const MAX_TAP_COUNT: usize = 8;
/// Largest payload scaling that keeps every payload kind inside the PA's
/// monotonic region for the default profile ranges.
pub const MAX_AMPLITUDE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Plain,
    VaryingAmplitude,
    Robot,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Plain, Scenario::VaryingAmplitude, Scenario::Robot];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Plain => "Plain",
            Scenario::VaryingAmplitude => "VaryingAmplitude",
            Scenario::Robot => "Robot",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Plain" => Ok(Scenario::Plain),
            "VaryingAmplitude" => Ok(Scenario::VaryingAmplitude),
            "Robot" => Ok(Scenario::Robot),
            other => Err(Error::invalid(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub amplitude_range: [f64; 2],
    pub snr_db: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            amplitude_range: [0.2, 1.0],
            snr_db: 20.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.amplitude_range;
        if !(lo > 0.0 && lo <= hi && hi <= MAX_AMPLITUDE) {
            return Err(Error::invalid(format!(
                "amplitude range [{lo}, {hi}] must satisfy 0 < min <= max <= {MAX_AMPLITUDE}"
            )));
        }
        if self.snr_db.is_nan() {
            return Err(Error::invalid("snr_db is NaN"));
        }
        Ok(())
    }
}

/// Parameters of the Robot scenario's moving reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotWalk {
    /// Index of the tap that moves.
    pub tap_index: usize,
    /// Per-packet complex Gaussian step (total standard deviation).
    pub step_sigma: f64,
    /// Moving-tap magnitude ceiling relative to the dominant tap.
    pub clamp_ratio: f64,
}

impl Default for RobotWalk {
    fn default() -> Self {
        Self {
            tap_index: 1,
            step_sigma: 0.02,
            clamp_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub emitter_id: u32,
    pub taps: Vec<Complex64>,
    pub static_gain: f64,
    pub scenario: Scenario,
    pub robot_walk_state: Option<RobotWalk>,
    pub env_epoch: u32,
}

impl ChannelState {
    pub fn identity(emitter_id: u32, scenario: Scenario) -> Self {
        Self {
            emitter_id,
            taps: vec![Complex64::new(1.0, 0.0)],
            static_gain: 1.0,
            scenario,
            robot_walk_state: None,
            env_epoch: 0,
        }
    }

    pub fn tap_norm(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn dominant_tap(&self) -> usize {
        (0..self.taps.len())
            .max_by(|&a, &b| {
                self.taps[a]
                    .norm()
                    .total_cmp(&self.taps[b].norm())
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    }

    /// Magnitude of the Robot's moving tap relative to the dominant tap.
    pub fn moving_tap_ratio(&self) -> Option<f64> {
        let walk = self.robot_walk_state?;
        let dominant = self.taps[self.dominant_tap()].norm();
        Some(self.taps[walk.tap_index].norm() / dominant)
    }

    fn normalize(&mut self) {
        let norm = self.tap_norm();
        if norm > 0.0 {
            for t in &mut self.taps {
                *t /= norm;
            }
        }
    }
}

/// Channel-draw knobs; defaults describe a small shielded room.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub tap_count: usize,
    /// Per-tap magnitude decay: |h_k| proportional to exp(-k * decay).
    pub decay: f64,
    pub gain_range: [f64; 2],
    pub robot: RobotWalk,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            tap_count: DEFAULT_TAP_COUNT,
            decay: 0.5,
            gain_range: [0.5, 1.0],
            robot: RobotWalk::default(),
        }
    }
}

/// One link per emitter, in profile order.
pub fn make_links(
    profiles: &[EmitterProfile],
    scenario: &ScenarioConfig,
    rng: &mut RandomStream,
) -> Result<Vec<ChannelState>> {
    make_links_with(profiles, scenario, &LinkParams::default(), rng)
}

pub fn make_links_with(
    profiles: &[EmitterProfile],
    scenario: &ScenarioConfig,
    params: &LinkParams,
    rng: &mut RandomStream,
) -> Result<Vec<ChannelState>> {
    if profiles.is_empty() {
        return Err(Error::invalid("make_links needs at least one emitter"));
    }
    if !(1..=MAX_TAP_COUNT).contains(&params.tap_count) {
        return Err(Error::invalid(format!(
            "tap count {} outside 1..={MAX_TAP_COUNT}",
            params.tap_count
        )));
    }
    let robot = (scenario.scenario == Scenario::Robot).then_some(params.robot);
    if let Some(walk) = robot {
        if walk.tap_index == 0 || walk.tap_index >= params.tap_count {
            return Err(Error::invalid(format!(
                "moving tap {} must be a non-dominant tap below {}",
                walk.tap_index, params.tap_count
            )));
        }
    }
    let links = profiles
        .iter()
        .map(|p| {
            // Tap draws happen for every scenario so that all scenarios share
            // the same room for the same seed.
            let taps: Vec<Complex64> = (0..params.tap_count)
                .map(|k| {
                    let phase = rng.random_range(-PI..PI);
                    Complex64::from_polar((-(k as f64) * params.decay).exp(), phase)
                })
                .collect();
            let static_gain = rng.random_range(params.gain_range[0]..=params.gain_range[1]);
            let mut link = ChannelState {
                emitter_id: p.emitter_id,
                taps,
                static_gain,
                scenario: scenario.scenario,
                robot_walk_state: robot,
                env_epoch: 0,
            };
            link.normalize();
            if let Some(walk) = robot {
                clamp_moving_tap(&mut link, walk);
            }
            link
        })
        .collect();
    Ok(links)
}

fn clamp_moving_tap(link: &mut ChannelState, walk: RobotWalk) {
    let ceiling = walk.clamp_ratio * link.taps[0].norm();
    let tap = &mut link.taps[walk.tap_index];
    let mag = tap.norm();
    if mag > ceiling {
        *tap *= ceiling / mag;
    }
}

/// Emission amplitude for one payload.
pub fn payload_amplitude(scenario: &ScenarioConfig, rng: &mut RandomStream) -> f64 {
    match scenario.scenario {
        Scenario::Plain => 1.0,
        Scenario::VaryingAmplitude | Scenario::Robot => {
            let [lo, hi] = scenario.amplitude_range;
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        }
    }
}

/// Full linear convolution with the link taps, scaled by the path gain.
pub fn convolve(x: &IqBuffer, taps: &[Complex64], gain: f64) -> IqBuffer {
    if x.is_empty() {
        return x.clone();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); x.len() + taps.len() - 1];
    for (k, &h) in taps.iter().enumerate() {
        let h = h * gain;
        for (o, s) in out[k..].iter_mut().zip(&x.samples) {
            *o += h * s;
        }
    }
    IqBuffer {
        samples: out,
        sample_rate_hz: x.sample_rate_hz,
    }
}

/// Advances the Robot reflection by one packet step (no-op otherwise).
pub fn advance_walk(link: &mut ChannelState, rng: &mut RandomStream) {
    let Some(walk) = link.robot_walk_state else {
        return;
    };
    let sigma = walk.step_sigma / 2f64.sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    link.taps[walk.tap_index] += Complex64::new(re * sigma, im * sigma);
    clamp_moving_tap(link, walk);
}

/// Sends `x` over the link. Robot links take one walk step first and return
/// the updated state; other scenarios return it unchanged.
pub fn propagate(
    x: &IqBuffer,
    link: &ChannelState,
    rng: &mut RandomStream,
) -> (IqBuffer, ChannelState) {
    let mut next = link.clone();
    advance_walk(&mut next, rng);
    let y = convolve(x, &next.taps, next.static_gain);
    (y, next)
}

/// A change of the room: one extra reflection of relative magnitude
/// U(0.1, 0.3) at a random delay. Delay and magnitude come from `rng` only,
/// so the same seeded stream yields the same change on every link; the
/// absolute phase additionally depends on the link's emitter.
pub fn perturb_environment(link: &ChannelState, rng: &mut RandomStream) -> ChannelState {
    let delay = rng.random_range(1..MAX_TAP_COUNT);
    let rel_magnitude = rng.random_range(0.1..=0.3);
    let phase_seed: u64 = rng.random();
    let phase = stream(derive_seed(&[phase_seed, link.emitter_id as u64]), 0).random_range(-PI..PI);

    let mut next = link.clone();
    if next.taps.len() <= delay {
        next.taps.resize(delay + 1, Complex64::new(0.0, 0.0));
    }
    let dominant = next.taps[next.dominant_tap()].norm();
    next.taps[delay] += Complex64::from_polar(rel_magnitude * dominant, phase);
    next.normalize();
    if let Some(walk) = next.robot_walk_state {
        clamp_moving_tap(&mut next, walk);
    }
    next.env_epoch += 1;
    next
}
