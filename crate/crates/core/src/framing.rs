//! Packet-level transmit/receive pipeline.
//!
//! A frame on the air is laid out as
//!
//! ```text
//! | wake-up zeros | preamble | header (1 OFDM symbol) | guard zeros | payload |
//! ```
//!
//! The header carries the 8-bit emitter id and its CRC-16/CCITT-FALSE, sent
//! twice on subcarriers 24 bins apart so a spectral null of the multipath
//! channel cannot wipe out a bit. The receiver finds the preamble by normalized correlation, estimates the
//! channel from it by least squares, decodes the header and cuts a fixed
//! window around the payload for the dataset.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, ScenarioConfig};
use crate::error::{Error, Result};
use crate::impairments::{apply_emitter_chain, EmitterProfile};
use crate::rng::RandomStream;
use crate::signal::{
    add_awgn, correlate_detect, make_payload, make_preamble, ofdm_modulate, ofdm_soft_demodulate,
    BitSequence, IqBuffer, PayloadKind, OFDM_DATA_CARRIERS, OFDM_SYMBOL_LEN, SAMPLE_RATE_HZ,
};

/// Scheduler period.
pub const SLOT_S: f64 = 1e-3;
const ID_BITS: usize = 8;
const CRC_BITS: usize = 16;
/// Channel taps estimated by the receiver.
const ESTIMATED_TAPS: usize = crate::channel::MAX_TAP_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub wakeup_zeros: usize,
    pub preamble_len: usize,
    pub guard_gap: usize,
    pub payload_len: usize,
    /// Samples kept before the nominal payload start.
    pub pre_roll: usize,
    /// Samples kept after the nominal payload end.
    pub post_roll: usize,
    /// RMS of the header relative to the unit-power preamble and payload.
    pub header_backoff: f64,
    /// Correlator threshold used by the receiver.
    pub detect_threshold: f64,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            wakeup_zeros: 200,
            preamble_len: 63,
            guard_gap: 100,
            payload_len: 560,
            pre_roll: 20,
            post_roll: 20,
            header_backoff: 0.5,
            detect_threshold: 0.6,
        }
    }
}

impl FrameLayout {
    pub fn header_len(&self) -> usize {
        OFDM_SYMBOL_LEN
    }

    pub fn frame_len(&self) -> usize {
        self.wakeup_zeros
            + self.preamble_len
            + self.header_len()
            + self.guard_gap
            + self.payload_len
    }

    /// Offset of the payload from the start of the preamble.
    pub fn payload_offset(&self) -> usize {
        self.preamble_len + self.header_len() + self.guard_gap
    }

    pub fn window_len(&self) -> usize {
        self.pre_roll + self.payload_len + self.post_roll
    }

    /// Length of the receiver capture for one frame.
    pub fn capture_len(&self) -> usize {
        self.frame_len() + self.post_roll
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub time_s: f64,
    pub emitter_id: u32,
}

/// One event per millisecond slot with the emitter drawn uniformly.
pub fn schedule(
    n_emitters: usize,
    duration_s: f64,
    rng: &mut RandomStream,
) -> Result<Vec<ScheduleEvent>> {
    if n_emitters < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 emitters, got {n_emitters}"
        )));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid(format!(
            "duration {duration_s} must be positive"
        )));
    }
    let slots = (duration_s / SLOT_S + 1e-9).floor() as usize;
    Ok((0..slots)
        .map(|k| ScheduleEvent {
            time_s: k as f64 * SLOT_S,
            emitter_id: rng.random_range(0..n_emitters as u32),
        })
        .collect())
}

const fn crc16_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC16_TABLE: [u16; 256] = crc16_table();

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection).
pub fn crc16_ccitt(data: &[u8]) -> u16 {
    data.iter().fold(0xffff, |crc, &b| {
        (crc << 8) ^ CRC16_TABLE[((crc >> 8) as u8 ^ b) as usize]
    })
}

const HEADER_WORD_BITS: usize = ID_BITS + CRC_BITS;
const _: () = assert!(2 * HEADER_WORD_BITS == OFDM_DATA_CARRIERS);

/// Header bits: id and CRC of the id byte, then the same 24 bits again
/// filling the rest of the OFDM symbol.
pub fn header_bits(emitter_id: u32) -> Result<BitSequence> {
    let id = u8::try_from(emitter_id).map_err(|_| Error::EmitterIdRange(emitter_id))?;
    let crc = crc16_ccitt(&[id]);
    let word = BitSequence::from_word(id as u64, ID_BITS)
        .concat(&BitSequence::from_word(crc as u64, CRC_BITS));
    Ok(word.concat(&word))
}

/// Combines the two copies of each header bit and checks the CRC.
pub fn decode_header_soft(soft: &[f64]) -> Option<u32> {
    if soft.len() < 2 * HEADER_WORD_BITS {
        return None;
    }
    let bits = (0..HEADER_WORD_BITS)
        .map(|i| u8::from(soft[i] + soft[i + HEADER_WORD_BITS] < 0.0))
        .collect();
    parse_header(&BitSequence::new(bits).ok()?)
}

/// Checks the CRC and extracts the id.
pub fn parse_header(bits: &BitSequence) -> Option<u32> {
    if bits.len() < ID_BITS + CRC_BITS {
        return None;
    }
    let id = bits.slice(0..ID_BITS).to_word() as u8;
    let crc = bits.slice(ID_BITS..ID_BITS + CRC_BITS).to_word() as u16;
    (crc16_ccitt(&[id]) == crc).then_some(id as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub wakeup_zeros: usize,
    pub preamble: IqBuffer,
    pub header: IqBuffer,
    pub guard_gap: usize,
    pub payload: IqBuffer,
}

impl Frame {
    pub fn serialize(&self) -> IqBuffer {
        let mut out = IqBuffer::zeros(self.wakeup_zeros);
        out.extend_from(&self.preamble);
        out.extend_from(&self.header);
        out.extend_zeros(self.guard_gap);
        out.extend_from(&self.payload);
        out
    }
}

pub fn build_frame(emitter_id: u32, payload: &IqBuffer) -> Result<Frame> {
    build_frame_with(emitter_id, payload, &FrameLayout::default())
}

pub fn build_frame_with(
    emitter_id: u32,
    payload: &IqBuffer,
    layout: &FrameLayout,
) -> Result<Frame> {
    if payload.len() != layout.payload_len {
        return Err(Error::Shape {
            expected: layout.payload_len,
            got: payload.len(),
        });
    }
    let header = ofdm_modulate(&header_bits(emitter_id)?)?.scaled(layout.header_backoff);
    Ok(Frame {
        wakeup_zeros: layout.wakeup_zeros,
        preamble: make_preamble(layout.preamble_len)?,
        header,
        guard_gap: layout.guard_gap,
        payload: payload.clone(),
    })
}

/// Everything a packet transmission needs besides the per-packet event.
#[derive(Debug, Clone, Copy)]
pub struct TxContext<'a> {
    pub profile: &'a EmitterProfile,
    pub scenario: &'a ScenarioConfig,
    pub payload_kind: PayloadKind,
    pub layout: &'a FrameLayout,
}

/// Emitter wakes up and sends one frame; returns the receiver capture and
/// the link state after the packet.
pub fn transmit_packet(
    event: &ScheduleEvent,
    ctx: &TxContext<'_>,
    link: &ChannelState,
    rng: &mut RandomStream,
) -> Result<(IqBuffer, ChannelState)> {
    let payload = make_payload(ctx.payload_kind, ctx.layout.payload_len, rng)?;
    let frame = build_frame_with(event.emitter_id, &payload, ctx.layout)?.serialize();
    let amplitude = channel::payload_amplitude(ctx.scenario, rng);
    let emitted = apply_emitter_chain(&frame.scaled(amplitude), ctx.profile, event.time_s)?;
    let (mut air, next) = channel::propagate(&emitted, link, rng);
    let capture = ctx.layout.capture_len();
    if air.len() < capture {
        air.extend_zeros(capture - air.len());
    }
    let air = add_awgn(&air, ctx.scenario.snr_db, rng)?;
    Ok((air, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderStatus {
    Decoded(u32),
    HeaderFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedPacket {
    pub emitter_id_decoded: HeaderStatus,
    pub payload_window: IqBuffer,
    pub detect_offset: usize,
    pub rx_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reception {
    NoFrame,
    Packet(ReceivedPacket),
}

/// Correlator + least-squares channel estimator + OFDM header decoder.
#[derive(Debug, Clone)]
pub struct Receiver {
    layout: FrameLayout,
    preamble: IqBuffer,
    /// (A^H A)^-1 for the preamble convolution matrix A.
    gram_inverse: Vec<Vec<Complex64>>,
}

impl Receiver {
    pub fn new(layout: FrameLayout) -> Result<Self> {
        let preamble = make_preamble(layout.preamble_len)?;
        Self::with_preamble(layout, preamble)
    }

    pub fn with_preamble(layout: FrameLayout, preamble: IqBuffer) -> Result<Self> {
        let p = &preamble.samples;
        let at = |n: usize, k: usize| {
            if n >= k {
                p[n - k]
            } else {
                Complex64::new(0.0, 0.0)
            }
        };
        let mut gram = vec![vec![Complex64::new(0.0, 0.0); ESTIMATED_TAPS]; ESTIMATED_TAPS];
        for (i, row) in gram.iter_mut().enumerate() {
            for (j, g) in row.iter_mut().enumerate() {
                *g = (0..p.len()).map(|n| at(n, i).conj() * at(n, j)).sum();
            }
        }
        let gram_inverse = invert(gram)?;
        Ok(Self {
            layout,
            preamble,
            gram_inverse,
        })
    }

    pub fn layout(&self) -> &FrameLayout {
        &self.layout
    }

    /// Least-squares taps seen over the preamble starting at `offset`.
    pub fn estimate_channel(&self, air: &IqBuffer, offset: usize) -> Vec<Complex64> {
        let p = &self.preamble.samples;
        let rhs: Vec<Complex64> = (0..ESTIMATED_TAPS)
            .map(|k| {
                (k..p.len())
                    .map(|n| {
                        p[n - k].conj() * air.samples.get(offset + n).copied().unwrap_or_default()
                    })
                    .sum()
            })
            .collect();
        self.gram_inverse
            .iter()
            .map(|row| row.iter().zip(&rhs).map(|(g, r)| g * r).sum())
            .collect()
    }

    pub fn receive(&self, air: &IqBuffer, capture_start_s: f64) -> Result<Reception> {
        let layout = &self.layout;
        if air.len() < self.preamble.len() {
            return Ok(Reception::NoFrame);
        }
        let detections = correlate_detect(air, &self.preamble, layout.detect_threshold)?;
        let Some(&offset) = detections.first() else {
            return Ok(Reception::NoFrame);
        };

        let header_start = offset + layout.preamble_len;
        let header_end = header_start + layout.header_len();
        let status = if header_end <= air.len() {
            let taps = self.estimate_channel(air, offset);
            let header = IqBuffer::new(air.samples[header_start..header_end].to_vec());
            match decode_header_soft(&ofdm_soft_demodulate(&header, &taps)?) {
                Some(id) => HeaderStatus::Decoded(id),
                None => HeaderStatus::HeaderFailed,
            }
        } else {
            HeaderStatus::HeaderFailed
        };

        let start = (offset + layout.payload_offset()).saturating_sub(layout.pre_roll);
        let mut window: Vec<Complex64> = air
            .samples
            .iter()
            .skip(start)
            .take(layout.window_len())
            .copied()
            .collect();
        window.resize(layout.window_len(), Complex64::new(0.0, 0.0));

        Ok(Reception::Packet(ReceivedPacket {
            emitter_id_decoded: status,
            payload_window: IqBuffer::new(window),
            detect_offset: offset,
            rx_time_s: capture_start_s + offset as f64 / SAMPLE_RATE_HZ,
        }))
    }
}

/// Receives with the default layout and the given reference preamble.
pub fn receive_packet(air: &IqBuffer, reference_preamble: &IqBuffer) -> Result<Reception> {
    let layout = FrameLayout {
        preamble_len: reference_preamble.len(),
        ..FrameLayout::default()
    };
    Receiver::with_preamble(layout, reference_preamble.clone())?.receive(air, 0.0)
}

/// Gauss-Jordan inversion with partial pivoting.
fn invert(mut m: Vec<Vec<Complex64>>) -> Result<Vec<Vec<Complex64>>> {
    let n = m.len();
    let mut inv: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Complex64::new(f64::from(u8::from(i == j)), 0.0))
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm()))
            .unwrap_or(col);
        if m[pivot][col].norm() < 1e-12 {
            return Err(Error::invalid(
                "preamble gives a singular channel estimator",
            ));
        }
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let d = m[col][col];
        for j in 0..n {
            m[col][j] /= d;
            inv[col][j] /= d;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                if f != Complex64::new(0.0, 0.0) {
                    for j in 0..n {
                        let (a, b) = (m[col][j], inv[col][j]);
                        m[row][j] -= f * a;
                        inv[row][j] -= f * b;
                    }
                }
            }
        }
    }
    Ok(inv)
}
