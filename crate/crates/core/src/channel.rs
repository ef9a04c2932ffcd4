//! Transmission channel: network noise, timer coarsening, bit batching.
//!
//! A sender modulates one bit per round by either touching the shared
//! accelerator (letting it stay warm) or leaving it idle (letting it sink
//! into a gated stage); the receiver times `N` probe rounds per bit and
//! compares the sample mean against a threshold. The network contributes
//! additive white Gaussian noise, and a coarsened timer floors every sample
//! to its grid. Closed-form per-bit error rates back the Monte Carlo paths.

use serde::{Deserialize, Serialize};

use crate::attacker::Threshold;
use crate::error::{Error, Result};
use crate::stats::{mean, normal_quantile, normal_tail_q, SeededRng};
use crate::DEFAULT_FREQUENCY_HZ;

/// Noise preset: same-host measurement, σ = 3000 cycles.
pub const LOCALHOST_SIGMA: f64 = 3_000.0;
/// Noise preset: one network hop, σ = 30000 cycles.
pub const ONE_HOP_SIGMA: f64 = 30_000.0;
/// Default seconds per probe round (one query over the network).
pub const DEFAULT_ROUND_TIME: f64 = 0.015;
/// Default warm-path response time in cycles. Large enough that the
/// clamp-at-zero on noisy samples never binds at the preset noise levels.
pub const DEFAULT_BASE_LATENCY: f64 = 1_000_000.0;

/// Which latency gap the sender modulates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GapSource {
    /// Deep power-gating rewarm of the matrix accelerator: Δ = 20000 cycles.
    Amx,
    /// Vector-unit frequency ramp baseline: Δ = 150 cycles.
    Avx512,
    /// Arbitrary gap in cycles.
    Custom(f64),
}

impl GapSource {
    /// Latency difference between the two bit levels, in cycles.
    pub fn gap_cycles(&self) -> f64 {
        match self {
            GapSource::Amx => 20_000.0,
            GapSource::Avx512 => 150.0,
            GapSource::Custom(delta) => *delta,
        }
    }
}

impl std::fmt::Display for GapSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GapSource::Amx => write!(f, "amx"),
            GapSource::Avx512 => write!(f, "avx512"),
            GapSource::Custom(delta) => write!(f, "custom:{delta}"),
        }
    }
}

impl std::str::FromStr for GapSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amx" => Ok(GapSource::Amx),
            "avx512" => Ok(GapSource::Avx512),
            other => match other.strip_prefix("custom:").and_then(|d| d.parse().ok()) {
                Some(delta) => Ok(GapSource::Custom(delta)),
                None => Err(Error::InvalidConfig(format!(
                    "unknown gap source `{other}` (expected amx, avx512, custom:<cycles>)"
                ))),
            },
        }
    }
}

/// Channel parameters for one covert or side-channel run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub source: GapSource,
    /// Additive Gaussian noise std, cycles.
    pub sigma: f64,
    /// Probe rounds batched per transmitted bit (N).
    pub trials_per_bit: usize,
    /// Timer grid in seconds; 0 means cycle-exact timing.
    pub timer_resolution: f64,
    /// Seconds per probe round, used for bandwidth accounting.
    pub round_time: f64,
    /// Clock frequency used to convert the timer grid to cycles.
    pub frequency_hz: f64,
}

impl ChannelConfig {
    /// Same-host preset: σ = 3000 cycles, exact timer.
    pub fn localhost(source: GapSource, trials_per_bit: usize) -> Self {
        ChannelConfig {
            source,
            sigma: LOCALHOST_SIGMA,
            trials_per_bit,
            timer_resolution: 0.0,
            round_time: DEFAULT_ROUND_TIME,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        }
    }

    /// One-hop network preset: σ = 30000 cycles, exact timer.
    pub fn one_hop(source: GapSource, trials_per_bit: usize) -> Self {
        ChannelConfig { sigma: ONE_HOP_SIGMA, ..Self::localhost(source, trials_per_bit) }
    }

    pub fn validate(&self) -> Result<()> {
        let delta = self.source.gap_cycles();
        if delta <= 0.0 || !delta.is_finite() {
            return Err(Error::InvalidConfig(format!("gap {delta} must be positive cycles")));
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma {} must be >= 0", self.sigma)));
        }
        if self.trials_per_bit == 0 {
            return Err(Error::InvalidConfig("trials_per_bit must be >= 1".into()));
        }
        if self.timer_resolution < 0.0 || !self.timer_resolution.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "timer_resolution {} must be >= 0 seconds",
                self.timer_resolution
            )));
        }
        if self.round_time <= 0.0 || !self.round_time.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "round_time {} must be positive seconds",
                self.round_time
            )));
        }
        if self.frequency_hz <= 0.0 || !self.frequency_hz.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "frequency_hz {} must be positive",
                self.frequency_hz
            )));
        }
        Ok(())
    }

    /// Timer grid in cycles, or `None` when timing is exact.
    pub fn grid_cycles(&self) -> Option<f64> {
        (self.timer_resolution > 0.0).then_some(self.timer_resolution * self.frequency_hz)
    }
}

/// One transmitted bit and its `N` observed (noisy, quantized) samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitTransmission {
    pub bit: bool,
    pub samples: Vec<f64>,
}

impl BitTransmission {
    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }
}

/// Transmit one bit: `N` samples of `base_low + bit·Δ + N(0, σ)`, clamped at
/// zero, then floored to the timer grid when one is configured.
pub fn transmit_bit(
    bit: bool,
    base_low: f64,
    cfg: &ChannelConfig,
    rng: &mut SeededRng,
) -> Result<BitTransmission> {
    cfg.validate()?;
    if base_low < 0.0 || !base_low.is_finite() {
        return Err(Error::InvalidConfig(format!("base_low {base_low} must be >= 0 cycles")));
    }
    let level = base_low + if bit { cfg.source.gap_cycles() } else { 0.0 };
    let grid = cfg.grid_cycles();
    let samples = (0..cfg.trials_per_bit)
        .map(|_| {
            let raw = (level + rng.gaussian(0.0, cfg.sigma)).max(0.0);
            match grid {
                Some(g) => (raw / g).floor() * g,
                None => raw,
            }
        })
        .collect();
    Ok(BitTransmission { bit, samples })
}

/// Decode one transmission: sample mean against the threshold, strictly
/// greater meaning 1.
pub fn decode_bit(tx: &BitTransmission, threshold: &Threshold) -> bool {
    threshold.classify(tx.mean())
}

/// Result of one message transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageTransmission {
    /// Sent payload (lossy UTF-8 rendering for reporting).
    pub message: String,
    /// Decoded payload (lossy UTF-8 rendering).
    pub decoded: String,
    pub ber: f64,
    pub bits: usize,
    pub trials_per_bit: usize,
    /// Raw decoded bytes (exact, unlike the lossy string above).
    #[serde(skip)]
    pub decoded_bytes: Vec<u8>,
    /// Number of wrongly decoded bits.
    pub bit_errors: usize,
}

/// Transmit a byte message MSB-first. The receiver first calibrates a
/// threshold from a preamble of `2·N` samples (`N` per level), then decodes
/// each bit from its own `N`-sample batch. Returns the decode and the
/// bit-error rate.
pub fn transmit_message(
    message: &[u8],
    base_low: f64,
    cfg: &ChannelConfig,
    rng: &mut SeededRng,
) -> Result<MessageTransmission> {
    transmit_message_detailed(message, base_low, cfg, rng).map(|(summary, _)| summary)
}

/// [`transmit_message`], additionally returning every per-bit transmission
/// (message bits only, preamble excluded) for histogram export.
pub fn transmit_message_detailed(
    message: &[u8],
    base_low: f64,
    cfg: &ChannelConfig,
    rng: &mut SeededRng,
) -> Result<(MessageTransmission, Vec<BitTransmission>)> {
    cfg.validate()?;
    if message.is_empty() {
        return Err(Error::InvalidConfig("message must be non-empty".into()));
    }
    let preamble_low = transmit_bit(false, base_low, cfg, rng)?;
    let preamble_high = transmit_bit(true, base_low, cfg, rng)?;
    // The encoding convention fixes polarity (bit 1 = higher level), so the
    // receiver always thresholds at the midpoint of its preamble estimates.
    // When noise swamps the gap the estimate may even come out inverted;
    // decoding then runs at chance, which is a result, not an error.
    let tau = (mean(&preamble_low.samples) + mean(&preamble_high.samples)) / 2.0;
    let threshold = Threshold::at(tau);

    let mut bit_errors = 0usize;
    let mut decoded_bytes = Vec::with_capacity(message.len());
    let mut transmissions = Vec::with_capacity(message.len() * 8);
    for &byte in message {
        let mut decoded_byte = 0u8;
        for k in (0..8).rev() {
            let bit = (byte >> k) & 1 == 1;
            let tx = transmit_bit(bit, base_low, cfg, rng)?;
            let decoded = decode_bit(&tx, &threshold);
            bit_errors += usize::from(decoded != bit);
            decoded_byte |= u8::from(decoded) << k;
            transmissions.push(tx);
        }
        decoded_bytes.push(decoded_byte);
    }
    let bits = message.len() * 8;
    let summary = MessageTransmission {
        message: String::from_utf8_lossy(message).into_owned(),
        decoded: String::from_utf8_lossy(&decoded_bytes).into_owned(),
        ber: bit_errors as f64 / bits as f64,
        bits,
        trials_per_bit: cfg.trials_per_bit,
        decoded_bytes,
        bit_errors,
    };
    Ok((summary, transmissions))
}

/// Closed-form per-bit decode error for midpoint-threshold sample-mean
/// decoding of two equal-variance Gaussian levels: `Q(Δ·√n / 2σ)`.
/// Noise-free channels never err.
pub fn analytic_bit_error(delta: f64, sigma: f64, n: usize) -> Result<f64> {
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::InvalidConfig(format!("delta {delta} must be positive")));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    Ok(normal_tail_q(delta * (n as f64).sqrt() / (2.0 * sigma)))
}

/// Largest noise std at which the channel maintains the given per-bit
/// confidence over `n` trials per bit: `σ_max = Δ·√n / (2·z)` with `z` the
/// confidence quantile. Confidence must exceed 0.5 (z > 0).
pub fn noise_resilience(source: GapSource, n: usize, confidence: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    let delta = source.gap_cycles();
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::InvalidConfig(format!("gap {delta} must be positive cycles")));
    }
    let z = normal_quantile(confidence)?;
    if z <= 0.0 {
        return Err(Error::InvalidProbability { name: "confidence", value: confidence });
    }
    Ok(delta * (n as f64).sqrt() / (2.0 * z))
}

/// Channel bandwidth in bits per second: one bit per `N` rounds.
pub fn bandwidth(cfg: &ChannelConfig) -> f64 {
    bandwidth_bits_per_sec(cfg.trials_per_bit, cfg.round_time)
}

/// Bandwidth of `n` rounds per bit at `round_time` seconds per round.
pub fn bandwidth_bits_per_sec(n: usize, round_time: f64) -> f64 {
    1.0 / (n as f64 * round_time)
}

/// Coarsest timer grid (seconds) at which the source's gap no longer spans a
/// full quantum: `Δ / frequency`.
pub fn min_suppressing_resolution(source: GapSource, frequency_hz: f64) -> f64 {
    source.gap_cycles() / frequency_hz
}

/// Monte Carlo per-bit decode error under a known midpoint threshold
/// (`base_low + Δ/2`), alternating the transmitted bit so the estimate is
/// exactly class-balanced when `reps` is even.
pub fn monte_carlo_bit_error(
    base_low: f64,
    cfg: &ChannelConfig,
    reps: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    let threshold = Threshold::at(base_low + cfg.source.gap_cycles() / 2.0);
    let mut errors = 0usize;
    for rep in 0..reps {
        let bit = rep % 2 == 1;
        let tx = transmit_bit(bit, base_low, cfg, rng)?;
        errors += usize::from(decode_bit(&tx, &threshold) != bit);
    }
    Ok(errors as f64 / reps as f64)
}
