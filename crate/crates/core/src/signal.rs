//! Elementary baseband DSP: sample buffers, QPSK and OFDM modulation,
//! the Zadoff-Chu detection preamble, correlation and additive noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Sample rate shared by every buffer in an experiment.
pub const SAMPLE_RATE_HZ: f64 = 5e6;

/// Complex baseband samples at [`SAMPLE_RATE_HZ`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IqBuffer {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of |s|^2; zero for an empty buffer.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.re.is_finite() && s.im.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * factor).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn extend_from(&mut self, other: &IqBuffer) {
        self.samples.extend_from_slice(&other.samples);
    }

    pub fn extend_zeros(&mut self, n: usize) {
        self.samples
            .extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), n));
    }
}

impl From<Vec<Complex64>> for IqBuffer {
    fn from(samples: Vec<Complex64>) -> Self {
        Self::new(samples)
    }
}

/// Ordered binary values, each 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitSequence(Vec<u8>);

impl BitSequence {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Self(bits))
    }

    pub fn random(len: usize, rng: &mut RandomStream) -> Self {
        Self((0..len).map(|_| rng.random_range(0..=1u8)).collect())
    }

    /// Most significant bit first.
    pub fn from_word(value: u64, width: usize) -> Self {
        Self((0..width).rev().map(|i| ((value >> i) & 1) as u8).collect())
    }

    pub fn to_word(&self) -> u64 {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &BitSequence) -> Self {
        let mut bits = self.0.clone();
        bits.extend_from_slice(&other.0);
        Self(bits)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self(self.0[range].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    Static,
    RandomBits,
    Noise,
}

impl PayloadKind {
    pub const ALL: [PayloadKind; 3] = [
        PayloadKind::Static,
        PayloadKind::RandomBits,
        PayloadKind::Noise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PayloadKind::Static => "Static",
            PayloadKind::RandomBits => "RandomBits",
            PayloadKind::Noise => "Noise",
        }
    }
}

impl std::str::FromStr for PayloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Static" => Ok(PayloadKind::Static),
            "RandomBits" => Ok(PayloadKind::RandomBits),
            "Noise" => Ok(PayloadKind::Noise),
            other => Err(Error::invalid(format!("unknown payload kind {other:?}"))),
        }
    }
}

/// Gray-mapped, unit-power QPSK at one symbol per sample.
pub fn qpsk_modulate(bits: &BitSequence) -> Result<IqBuffer> {
    if bits.len() % 2 != 0 {
        return Err(Error::OddBitLength(bits.len()));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let samples = bits
        .bits()
        .chunks_exact(2)
        .map(|pair| {
            Complex64::new(
                (1.0 - 2.0 * pair[0] as f64) * scale,
                (1.0 - 2.0 * pair[1] as f64) * scale,
            )
        })
        .collect();
    Ok(IqBuffer::new(samples))
}

/// Chip sequence spreading an 802.15.4 zero symbol (the preamble is eight of
/// them). c0 first.
const IEEE802154_ZERO_SYMBOL_CHIPS: [u8; 32] = [
    1, 1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1, 0,
];
const IEEE802154_PREAMBLE_SYMBOLS: usize = 8;

/// The on-air bit pattern of an 802.15.4 preamble: 8 zero symbols, 256 chips.
pub fn ieee802154_preamble_bits() -> BitSequence {
    BitSequence(
        IEEE802154_ZERO_SYMBOL_CHIPS
            .iter()
            .copied()
            .cycle()
            .take(32 * IEEE802154_PREAMBLE_SYMBOLS)
            .collect(),
    )
}

/// Payload burst of `length_samples` unit-power samples.
pub fn make_payload(
    kind: PayloadKind,
    length_samples: usize,
    rng: &mut RandomStream,
) -> Result<IqBuffer> {
    if length_samples == 0 {
        return Err(Error::invalid("payload length must be positive"));
    }
    match kind {
        PayloadKind::Static => {
            let pattern = ieee802154_preamble_bits();
            let bits = pattern
                .bits()
                .iter()
                .copied()
                .cycle()
                .take(2 * length_samples)
                .collect();
            qpsk_modulate(&BitSequence(bits))
        }
        PayloadKind::RandomBits => qpsk_modulate(&BitSequence::random(2 * length_samples, rng)),
        PayloadKind::Noise => {
            // Var of U(-a, a) is a^2/3, so a = sqrt(3/2) gives 1/2 per rail.
            let a = 1.5f64.sqrt();
            let samples = (0..length_samples)
                .map(|_| Complex64::new(rng.random_range(-a..=a), rng.random_range(-a..=a)))
                .collect();
            Ok(IqBuffer::new(samples))
        }
    }
}

/// Root-1 Zadoff-Chu sequence of the requested length.
pub fn make_preamble(length_samples: usize) -> Result<IqBuffer> {
    if length_samples < 16 {
        return Err(Error::invalid(format!(
            "preamble length {length_samples} below minimum 16"
        )));
    }
    let len = length_samples as f64;
    let odd = length_samples % 2 == 1;
    let samples = (0..length_samples)
        .map(|n| {
            let n = n as f64;
            let arg = if odd { n * (n + 1.0) } else { n * n };
            Complex64::from_polar(1.0, -PI * arg / len)
        })
        .collect();
    Ok(IqBuffer::new(samples))
}

/// Normalized cross-correlation magnitude of `reference` against every
/// full-overlap position of `signal`.
pub fn normalized_correlation(signal: &IqBuffer, reference: &IqBuffer) -> Result<Vec<f64>> {
    let l = reference.len();
    if l == 0 {
        return Err(Error::invalid("empty reference"));
    }
    if l > signal.len() {
        return Err(Error::invalid(format!(
            "reference ({l}) longer than signal ({})",
            signal.len()
        )));
    }
    let sig = &signal.samples;
    let ref_norm = reference
        .samples
        .iter()
        .map(|s| s.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let positions = sig.len() - l + 1;
    let mut out = Vec::with_capacity(positions);
    let mut energy: f64 = sig[..l].iter().map(|s| s.norm_sqr()).sum();
    for k in 0..positions {
        if k > 0 {
            energy += sig[k + l - 1].norm_sqr() - sig[k - 1].norm_sqr();
        }
        let dot: Complex64 = sig[k..k + l]
            .iter()
            .zip(&reference.samples)
            .map(|(s, r)| s * r.conj())
            .sum();
        // The running sum can drift slightly negative over all-zero stretches.
        let denom = energy.max(0.0).sqrt() * ref_norm;
        out.push(if denom > 1e-12 {
            dot.norm() / denom
        } else {
            0.0
        });
    }
    Ok(out)
}

/// Offsets where the normalized correlation exceeds `threshold_ratio`,
/// reduced to local maxima at least one reference length apart.
pub fn correlate_detect(
    signal: &IqBuffer,
    reference: &IqBuffer,
    threshold_ratio: f64,
) -> Result<Vec<usize>> {
    if !(threshold_ratio > 0.0 && threshold_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "threshold ratio {threshold_ratio} outside (0, 1]"
        )));
    }
    let metric = normalized_correlation(signal, reference)?;
    let l = reference.len();
    let mut candidates: Vec<usize> = (0..metric.len())
        .filter(|&k| metric[k] > threshold_ratio)
        .collect();
    // Strongest first, ties to the earlier offset.
    candidates.sort_by(|&a, &b| metric[b].total_cmp(&metric[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for k in candidates {
        if accepted.iter().all(|&a| a.abs_diff(k) >= l) {
            accepted.push(k);
        }
    }
    accepted.sort_unstable();
    Ok(accepted)
}

/// Adds circular complex Gaussian noise at `snr_db` relative to the buffer's
/// mean power. `f64::INFINITY` means no noise.
pub fn add_awgn(signal: &IqBuffer, snr_db: f64, rng: &mut RandomStream) -> Result<IqBuffer> {
    if signal.is_empty() {
        return Err(Error::invalid("cannot add noise to an empty signal"));
    }
    let power = signal.mean_power();
    if power <= 0.0 {
        return Err(Error::ZeroPowerSignal);
    }
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("snr_db is NaN"));
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let samples = signal
        .samples
        .iter()
        .map(|s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(re * sigma, im * sigma)
        })
        .collect();
    Ok(IqBuffer {
        samples,
        sample_rate_hz: signal.sample_rate_hz,
    })
}

pub const OFDM_FFT_LEN: usize = 64;
pub const OFDM_CP_LEN: usize = 16;
pub const OFDM_SYMBOL_LEN: usize = OFDM_FFT_LEN + OFDM_CP_LEN;
pub const OFDM_DATA_CARRIERS: usize = 48;

const OFDM_PILOTS: [(i32, f64); 4] = [(-21, 1.0), (-7, 1.0), (7, 1.0), (21, -1.0)];
const OFDM_ACTIVE_CARRIERS: usize = OFDM_DATA_CARRIERS + OFDM_PILOTS.len();

fn bin(k: i32) -> usize {
    k.rem_euclid(OFDM_FFT_LEN as i32) as usize
}

/// Data subcarriers -26..=26 minus DC and the four pilots, lowest first.
fn data_carriers() -> impl Iterator<Item = i32> {
    (-26..=26).filter(|&k| k != 0 && !OFDM_PILOTS.iter().any(|&(p, _)| p == k))
}

/// Fixed +/-1 polarity per data subcarrier (x^7 + x^4 + 1 scrambler, all-ones
/// seed). Keeps structured headers such as all-zero padding from collapsing
/// into a single time-domain spike.
fn carrier_polarity() -> [f64; OFDM_DATA_CARRIERS] {
    let mut state: u8 = 0x7f;
    let mut out = [1.0; OFDM_DATA_CARRIERS];
    for p in out.iter_mut() {
        let bit = ((state >> 6) ^ (state >> 3)) & 1;
        state = ((state << 1) | bit) & 0x7f;
        if bit == 1 {
            *p = -1.0;
        }
    }
    out
}

/// BPSK-over-OFDM: 64-point IFFT, 48 data carriers, 16-sample cyclic prefix,
/// unit mean power per symbol.
pub fn ofdm_modulate(bits: &BitSequence) -> Result<IqBuffer> {
    if bits.is_empty() || bits.len() % OFDM_DATA_CARRIERS != 0 {
        return Err(Error::OfdmLength {
            expected: OFDM_DATA_CARRIERS,
            got: bits.len(),
        });
    }
    let polarity = carrier_polarity();
    let ifft = FftPlanner::new().plan_fft_inverse(OFDM_FFT_LEN);
    let scale = 1.0 / (OFDM_ACTIVE_CARRIERS as f64).sqrt();
    let mut out = Vec::with_capacity(bits.len() / OFDM_DATA_CARRIERS * OFDM_SYMBOL_LEN);
    for chunk in bits.bits().chunks_exact(OFDM_DATA_CARRIERS) {
        let mut freq = vec![Complex64::new(0.0, 0.0); OFDM_FFT_LEN];
        for ((k, &b), p) in data_carriers().zip(chunk).zip(polarity) {
            freq[bin(k)] = Complex64::new(p * (1.0 - 2.0 * b as f64), 0.0);
        }
        for &(k, v) in &OFDM_PILOTS {
            freq[bin(k)] = Complex64::new(v, 0.0);
        }
        ifft.process(&mut freq);
        out.extend(freq[OFDM_FFT_LEN - OFDM_CP_LEN..].iter().map(|s| s * scale));
        out.extend(freq.iter().map(|s| s * scale));
    }
    Ok(IqBuffer::new(out))
}

/// Inverse of [`ofdm_modulate`] for an unimpaired signal.
pub fn ofdm_demodulate(samples: &IqBuffer) -> Result<BitSequence> {
    let flat = [Complex64::new(1.0, 0.0)];
    ofdm_demodulate_equalized(samples, &flat)
}

/// Demodulates through a known channel impulse response: matched-filter
/// equalization per subcarrier plus a common phase correction from the
/// pilots.
pub fn ofdm_demodulate_equalized(samples: &IqBuffer, taps: &[Complex64]) -> Result<BitSequence> {
    let soft = ofdm_soft_demodulate(samples, taps)?;
    Ok(BitSequence(
        soft.iter().map(|&s| u8::from(s < 0.0)).collect(),
    ))
}

/// Per-bit soft values (positive means 0) weighted by the subcarrier gain, so
/// that repeated bits can be combined by simple addition.
pub fn ofdm_soft_demodulate(samples: &IqBuffer, taps: &[Complex64]) -> Result<Vec<f64>> {
    if samples.is_empty() || samples.len() % OFDM_SYMBOL_LEN != 0 {
        return Err(Error::OfdmLength {
            expected: OFDM_SYMBOL_LEN,
            got: samples.len(),
        });
    }
    if taps.is_empty() || taps.len() > OFDM_CP_LEN {
        return Err(Error::invalid(format!(
            "channel length {} not in 1..={OFDM_CP_LEN}",
            taps.len()
        )));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(OFDM_FFT_LEN);
    let mut response = vec![Complex64::new(0.0, 0.0); OFDM_FFT_LEN];
    response[..taps.len()].copy_from_slice(taps);
    fft.process(&mut response);

    let polarity = carrier_polarity();
    let mut soft = Vec::with_capacity(samples.len() / OFDM_SYMBOL_LEN * OFDM_DATA_CARRIERS);
    for symbol in samples.samples.chunks_exact(OFDM_SYMBOL_LEN) {
        let mut freq = symbol[OFDM_CP_LEN..].to_vec();
        fft.process(&mut freq);
        let matched = |k: i32| freq[bin(k)] * response[bin(k)].conj();
        let pilot_sum: Complex64 = OFDM_PILOTS.iter().map(|&(k, v)| matched(k) * v).sum();
        let derotate = if pilot_sum.norm() > 0.0 {
            pilot_sum.conj() / pilot_sum.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        soft.extend(
            data_carriers()
                .zip(polarity)
                .map(|(k, p)| (matched(k) * derotate).re * p),
        );
    }
    Ok(soft)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qpsk_gray_points() {
        let s = qpsk_modulate(&BitSequence::new(vec![0, 0, 1, 1, 0, 1]).unwrap()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(s.samples, vec![c(h, h), c(-h, -h), c(h, -h)]);
    }

    #[test]
    fn qpsk_rejects_odd_length() {
        let err = qpsk_modulate(&BitSequence::new(vec![0, 1, 1]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("odd bit length"));
    }

    #[test]
    fn qpsk_unit_power() {
        let bits = BitSequence::random(1120, &mut stream(1, 0));
        let s = qpsk_modulate(&bits).unwrap();
        assert_eq!(s.len(), 560);
        assert!((s.mean_power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bit_sequence_rejects_non_binary() {
        assert!(BitSequence::new(vec![0, 2]).is_err());
        assert_eq!(BitSequence::from_word(0x2a, 8).to_word(), 0x2a);
    }

    #[test]
    fn static_payload_is_deterministic() {
        let a = make_payload(PayloadKind::Static, 560, &mut stream(1, 0)).unwrap();
        let b = make_payload(PayloadKind::Static, 560, &mut stream(99, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 560);
    }

    #[test]
    fn random_payload_on_constellation() {
        let p = make_payload(PayloadKind::RandomBits, 560, &mut stream(2, 0)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(p.len(), 560);
        assert!(p
            .samples
            .iter()
            .all(|s| (s.re.abs() - h).abs() < 1e-15 && (s.im.abs() - h).abs() < 1e-15));
    }

    #[test]
    fn noise_payload_unit_power() {
        let p = make_payload(PayloadKind::Noise, 100_000, &mut stream(3, 0)).unwrap();
        let lim = 1.5f64.sqrt();
        assert!(p
            .samples
            .iter()
            .all(|s| s.re.abs() <= lim && s.im.abs() <= lim));
        assert!((p.mean_power() - 1.0).abs() < 0.01, "{}", p.mean_power());
    }

    #[test]
    fn zero_length_payload_rejected() {
        assert!(make_payload(PayloadKind::Noise, 0, &mut stream(3, 0)).is_err());
    }

    #[test]
    fn preamble_constant_modulus_and_deterministic() {
        let p = make_preamble(63).unwrap();
        assert!(p.samples.iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
        assert_eq!(p, make_preamble(63).unwrap());
        assert!(make_preamble(15).is_err());
    }

    #[test]
    fn preamble_periodic_autocorrelation_is_ideal() {
        for len in [63, 64, 127] {
            let p = make_preamble(len).unwrap().samples;
            for lag in 1..len {
                let c: Complex64 = (0..len).map(|n| p[n] * p[(n + lag) % len].conj()).sum();
                assert!(
                    c.norm() / (len as f64) < 1e-9,
                    "len {len} lag {lag}: {}",
                    c.norm()
                );
            }
        }
    }

    #[test]
    fn correlator_finds_embedded_preamble() {
        let pre = make_preamble(63).unwrap();
        let mut sig = IqBuffer::zeros(100);
        sig.extend_from(&pre);
        sig.extend_zeros(100);
        assert_eq!(correlate_detect(&sig, &pre, 0.9).unwrap(), vec![100]);
    }

    #[test]
    fn correlator_errors() {
        let pre = make_preamble(63).unwrap();
        assert!(correlate_detect(&pre, &IqBuffer::default(), 0.5).is_err());
        assert!(correlate_detect(&pre, &pre, 0.0).is_err());
        assert!(correlate_detect(&IqBuffer::zeros(10), &pre, 0.5).is_err());
    }

    #[test]
    fn correlator_separates_two_frames() {
        let pre = make_preamble(63).unwrap();
        let mut sig = IqBuffer::zeros(10);
        sig.extend_from(&pre);
        sig.extend_zeros(40);
        sig.extend_from(&pre.scaled(0.3));
        sig.extend_zeros(5);
        assert_eq!(correlate_detect(&sig, &pre, 0.9).unwrap(), vec![10, 113]);
    }

    #[test]
    fn awgn_infinite_snr_is_identity() {
        let s = make_payload(PayloadKind::Noise, 64, &mut stream(4, 0)).unwrap();
        assert_eq!(add_awgn(&s, f64::INFINITY, &mut stream(5, 0)).unwrap(), s);
    }

    #[test]
    fn awgn_rejects_zero_power() {
        let err = add_awgn(&IqBuffer::zeros(8), 10.0, &mut stream(0, 0)).unwrap_err();
        assert!(matches!(err, Error::ZeroPowerSignal));
    }

    #[test]
    fn awgn_noise_power_at_zero_db() {
        let s = qpsk_modulate(&BitSequence::random(2_000_000, &mut stream(6, 0))).unwrap();
        let noisy = add_awgn(&s, 0.0, &mut stream(6, 1)).unwrap();
        let p = noisy
            .samples
            .iter()
            .zip(&s.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / s.len() as f64;
        assert!((p - 1.0).abs() < 0.01, "noise power {p}");
    }

    #[test]
    fn awgn_deterministic_per_seed() {
        let s = make_payload(PayloadKind::Static, 100, &mut stream(0, 0)).unwrap();
        let a = add_awgn(&s, 10.0, &mut stream(8, 2)).unwrap();
        let b = add_awgn(&s, 10.0, &mut stream(8, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ofdm_numerology() {
        let bits = BitSequence::random(96, &mut stream(9, 0));
        let s = ofdm_modulate(&bits).unwrap();
        assert_eq!(s.len(), 2 * OFDM_SYMBOL_LEN);
        // Cyclic prefix copies the symbol tail.
        assert_eq!(
            s.samples[..OFDM_CP_LEN],
            s.samples[OFDM_FFT_LEN..OFDM_SYMBOL_LEN]
        );
        let body = IqBuffer::new(s.samples[OFDM_CP_LEN..OFDM_SYMBOL_LEN].to_vec());
        assert!((body.mean_power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ofdm_length_errors() {
        assert!(ofdm_modulate(&BitSequence::random(47, &mut stream(0, 0))).is_err());
        assert!(ofdm_modulate(&BitSequence::default()).is_err());
        assert!(ofdm_demodulate(&IqBuffer::zeros(79)).is_err());
    }

    #[test]
    fn ofdm_equalizer_undoes_multipath() {
        let bits = BitSequence::random(48, &mut stream(10, 0));
        let tx = ofdm_modulate(&bits).unwrap();
        let taps = [c(0.8, 0.1), c(-0.3, 0.4), c(0.0, 0.2)];
        let rot = Complex64::from_polar(1.0, 2.1);
        // Circular convolution is exact over the CP.
        let mut rx = vec![c(0.0, 0.0); tx.len()];
        for n in OFDM_CP_LEN..tx.len() {
            for (k, h) in taps.iter().enumerate() {
                rx[n] += h * tx.samples[n - k] * rot;
            }
        }
        let decoded = ofdm_demodulate_equalized(&IqBuffer::new(rx), &taps).unwrap();
        assert_eq!(decoded, bits);
    }
}
