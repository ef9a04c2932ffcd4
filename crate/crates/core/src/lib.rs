//! Deterministic simulator for timing side channels induced by on-core
//! accelerator power gating.
//!
//! The model: an accelerator (e.g. a matrix-multiply unit) is progressively
//! power-gated through a small number of sleep stages as it sits idle. The
//! first instruction issued after an idle period pays a stage-dependent
//! rewarm latency, and the package draws stage-dependent power while parked.
//! That latency staircase is a timing channel: anything that conditions
//! accelerator usage on a secret (expert routing, early exit, membership)
//! leaks through it.
//!
//! Modules:
//! - [`power_gate`]: the idle-stage state machine (latency/power tables).
//! - [`gadgets`]: victim workload traces whose shape depends on a secret.
//! - [`attacker`]: reset/trigger/measure pipeline, thresholding, metrics.
//! - [`channel`]: noisy remote observation, covert transmission, closed-form
//!   error/resilience/bandwidth analysis, timer coarsening.
//! - [`magnifier`]: latency amplification of small victim delays via stage
//!   boundaries.
//! - [`mitigations`]: gating policies and their power/performance overheads.
//! - [`stats`]: seeded RNG streams, normal-distribution numerics, histograms.
//! - [`scenario`]: flat-key scenario configs, bundled scenarios, file output.
//!
//! Everything is seed-deterministic: the same seed and config produce the
//! same traces, observations, and output bytes.

pub mod attacker;
pub mod channel;
pub mod error;
pub mod gadgets;
pub mod magnifier;
pub mod mitigations;
pub mod power_gate;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};

/// Default core clock for converting cycles to seconds: 2.0 GHz (0.5 ns per
/// cycle), the calibration used throughout the bundled scenarios.
pub const DEFAULT_FREQUENCY_HZ: f64 = 2.0e9;
