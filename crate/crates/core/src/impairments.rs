//! Transmitter hardware imperfections that make up an emitter's RF signature:
//! IQ gain/phase mismatch, LO leakage (DC offset), a memoryless cubic power
//! amplifier and a drifting carrier frequency offset.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::signal::IqBuffer;

pub const CARRIER_HZ: f64 = 433e6;

/// Ground-truth impairment parameters of one emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterProfile {
    pub emitter_id: u32,
    pub iq_gain_mismatch: f64,
    pub iq_phase_error_rad: f64,
    pub dc_offset: Complex64,
    pub cfo_ppm: f64,
    pub cfo_drift_ppm_per_s: f64,
    pub carrier_hz: f64,
    pub pa_a1: f64,
    pub pa_a3: f64,
    pub pa_phase3_rad_per_power: f64,
    pub calibrated: bool,
}

impl EmitterProfile {
    /// A profile whose chain is the exact identity.
    pub fn neutral(emitter_id: u32) -> Self {
        Self {
            emitter_id,
            iq_gain_mismatch: 0.0,
            iq_phase_error_rad: 0.0,
            dc_offset: Complex64::new(0.0, 0.0),
            cfo_ppm: 0.0,
            cfo_drift_ppm_per_s: 0.0,
            carrier_hz: CARRIER_HZ,
            pa_a1: 1.0,
            pa_a3: 0.0,
            pa_phase3_rad_per_power: 0.0,
            calibrated: false,
        }
    }

    /// Largest input amplitude for which the cubic AM/AM curve is still
    /// increasing; infinite for a linear amplifier.
    pub fn pa_monotonic_limit(&self) -> f64 {
        if self.pa_a3 == 0.0 {
            f64::INFINITY
        } else {
            (self.pa_a1 / (3.0 * self.pa_a3.abs())).sqrt()
        }
    }

    /// Output amplitude at the edge of the monotonic region.
    pub fn pa_peak_output(&self) -> f64 {
        self.pa_a1 * (2.0 / 3.0) * self.pa_monotonic_limit()
    }

    /// Instantaneous frequency offset in Hz at experiment time `t_s`.
    pub fn cfo_hz_at(&self, t_s: f64) -> f64 {
        self.carrier_hz * (self.cfo_ppm + self.cfo_drift_ppm_per_s * t_s) * 1e-6
    }
}

/// Uniform draw ranges for uncalibrated emitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRanges {
    pub iq_gain_mismatch: f64,
    pub iq_phase_error_rad: f64,
    pub dc_offset_max: f64,
    pub cfo_ppm: f64,
    pub cfo_drift_ppm_per_s: f64,
    pub pa_a1: (f64, f64),
    pub pa_a3: (f64, f64),
    pub pa_phase3: (f64, f64),
    /// IQ/DC ranges are divided by this factor for calibrated radios.
    pub calibration_factor: f64,
}

impl Default for ProfileRanges {
    fn default() -> Self {
        Self {
            iq_gain_mismatch: 0.03,
            iq_phase_error_rad: 0.03,
            dc_offset_max: 0.01,
            cfo_ppm: 2.0,
            cfo_drift_ppm_per_s: 0.01,
            pa_a1: (0.95, 1.05),
            pa_a3: (-0.05, -0.005),
            pa_phase3: (0.0, 0.05),
            calibration_factor: 30.0,
        }
    }
}

fn symmetric(rng: &mut RandomStream, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..half_width)
    }
}

/// Draws `n` independent emitter signatures with ids `0..n`.
pub fn sample_profiles(
    n: usize,
    calibrated: bool,
    rng: &mut RandomStream,
) -> Result<Vec<EmitterProfile>> {
    sample_profiles_with(n, calibrated, &ProfileRanges::default(), rng)
}

pub fn sample_profiles_with(
    n: usize,
    calibrated: bool,
    ranges: &ProfileRanges,
    rng: &mut RandomStream,
) -> Result<Vec<EmitterProfile>> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 emitters to classify, got {n}"
        )));
    }
    let iq_scale = if calibrated {
        1.0 / ranges.calibration_factor
    } else {
        1.0
    };
    let mut profiles: Vec<EmitterProfile> = Vec::with_capacity(n);
    while profiles.len() < n {
        let dc_mag = rng.random_range(0.0..=ranges.dc_offset_max * iq_scale);
        let dc_phase = rng.random_range(-PI..PI);
        let candidate = EmitterProfile {
            emitter_id: profiles.len() as u32,
            iq_gain_mismatch: symmetric(rng, ranges.iq_gain_mismatch * iq_scale),
            iq_phase_error_rad: symmetric(rng, ranges.iq_phase_error_rad * iq_scale),
            dc_offset: Complex64::from_polar(dc_mag, dc_phase),
            cfo_ppm: symmetric(rng, ranges.cfo_ppm),
            cfo_drift_ppm_per_s: symmetric(rng, ranges.cfo_drift_ppm_per_s),
            carrier_hz: CARRIER_HZ,
            pa_a1: rng.random_range(ranges.pa_a1.0..=ranges.pa_a1.1),
            pa_a3: rng.random_range(ranges.pa_a3.0..=ranges.pa_a3.1),
            pa_phase3_rad_per_power: rng.random_range(ranges.pa_phase3.0..=ranges.pa_phase3.1),
            calibrated,
        };
        let duplicate = profiles.iter().any(|p| {
            EmitterProfile {
                emitter_id: candidate.emitter_id,
                ..p.clone()
            } == candidate
        });
        if !duplicate {
            profiles.push(candidate);
        }
    }
    Ok(profiles)
}

/// Gain/phase mismatch between the I and Q branches followed by LO leakage.
pub fn apply_iq_imbalance(x: &IqBuffer, profile: &EmitterProfile) -> IqBuffer {
    let eps = profile.iq_gain_mismatch;
    let (sin_phi, cos_phi) = profile.iq_phase_error_rad.sin_cos();
    let d = profile.dc_offset;
    let samples = x
        .samples
        .iter()
        .map(|s| {
            let i = (1.0 + eps) * s.re;
            let q = (1.0 - eps) * (s.im * cos_phi + s.re * sin_phi);
            Complex64::new(i, q) + d
        })
        .collect();
    IqBuffer {
        samples,
        sample_rate_hz: x.sample_rate_hz,
    }
}

/// Memoryless cubic AM/AM with quadratic AM/PM.
pub fn apply_pa_nonlinearity(x: &IqBuffer, profile: &EmitterProfile) -> Result<IqBuffer> {
    let limit = profile.pa_monotonic_limit();
    let (a1, a3, k3) = (
        profile.pa_a1,
        profile.pa_a3,
        profile.pa_phase3_rad_per_power,
    );
    let mut samples = Vec::with_capacity(x.len());
    for s in &x.samples {
        let r = s.norm();
        if r > limit {
            return Err(Error::PaOverdriven {
                amplitude: r,
                limit,
            });
        }
        if r == 0.0 {
            samples.push(Complex64::new(0.0, 0.0));
            continue;
        }
        let gain = a1 + a3 * r * r;
        let rotation = Complex64::from_polar(1.0, k3 * r * r);
        samples.push(s * gain * rotation);
    }
    Ok(IqBuffer {
        samples,
        sample_rate_hz: x.sample_rate_hz,
    })
}

/// Carrier frequency offset with drift frozen at the packet start `t0_s`.
pub fn apply_cfo(x: &IqBuffer, profile: &EmitterProfile, t0_s: f64) -> IqBuffer {
    let f = profile.cfo_hz_at(t0_s);
    if f == 0.0 {
        return x.clone();
    }
    let fs = x.sample_rate_hz;
    let start = (2.0 * PI * f * t0_s).rem_euclid(2.0 * PI);
    let step = 2.0 * PI * f / fs;
    let samples = x
        .samples
        .iter()
        .enumerate()
        .map(|(n, s)| s * Complex64::from_polar(1.0, start + step * n as f64))
        .collect();
    IqBuffer {
        samples,
        sample_rate_hz: fs,
    }
}

/// IQ imbalance, then amplifier, then up-conversion offset.
pub fn apply_emitter_chain(x: &IqBuffer, profile: &EmitterProfile, t0_s: f64) -> Result<IqBuffer> {
    let baseband = apply_iq_imbalance(x, profile);
    let amplified = apply_pa_nonlinearity(&baseband, profile)?;
    Ok(apply_cfo(&amplified, profile, t0_s))
}

pub fn write_profiles(path: &Path, profiles: &[EmitterProfile]) -> Result<()> {
    let json = serde_json::to_string_pretty(profiles)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_profiles(path: &Path) -> Result<Vec<EmitterProfile>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
