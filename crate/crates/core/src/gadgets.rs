//! Victim-side trace generators.
//!
//! A gadget turns one secret-dependent inference decision into a sequence of
//! compute intervals and accelerator invocations. The secret never reaches
//! the observer through the API: a [`GadgetTrace`] keeps its label private,
//! and measurement code sees only event timing. The label is surfaced
//! separately (as ground truth on scored observations) so accuracy can be
//! computed without the classifier ever reading it.
//!
//! Three gadgets are modeled:
//! * sparse expert routing — inputs take either a deep or a shallow stack of
//!   accelerated layers, with per-layer compute jitter;
//! * early exit — inference leaves the network early and pads the remaining
//!   wall time with plain CPU compute, leaving the accelerator idle;
//! * membership inference — a behavioral layer on top of early exit, where
//!   training-set members exit early more often than non-members.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_gate::Invoker;
use crate::stats::SeededRng;

/// One step of a victim trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    /// Plain CPU work for the given number of cycles; the accelerator idles.
    Compute(u64),
    /// One accelerator invocation (tile multiply); rewarm latency applies.
    AccelInvoke,
}

/// A victim execution schedule plus its hidden ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GadgetTrace {
    events: Vec<TraceEvent>,
    secret: bool,
}

impl GadgetTrace {
    pub fn new(events: Vec<TraceEvent>, secret: bool) -> Self {
        GadgetTrace { events, secret }
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// Ground truth for scoring only. Classifiers must never read this;
    /// attack harnesses copy it onto observations after measurement.
    pub fn ground_truth(&self) -> bool {
        self.secret
    }

    /// Total plain-compute cycles in the trace (excludes invoke latencies).
    pub fn compute_cycles(&self) -> u64 {
        self.events
            .iter()
            .map(|e| match e {
                TraceEvent::Compute(c) => *c,
                TraceEvent::AccelInvoke => 0,
            })
            .sum()
    }

    /// Number of accelerator invocations in the trace.
    pub fn invoke_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, TraceEvent::AccelInvoke)).count()
    }
}

/// Sparse expert-routing victim: secret-dependent number of accelerated
/// layers, each `[Compute(per_layer_compute + jitter), AccelInvoke...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeConfig {
    /// Layers executed on the deep (secret = true) path.
    pub layers_high: usize,
    /// Layers executed on the shallow (secret = false) path.
    pub layers_low: usize,
    /// Nominal compute cycles per layer.
    pub per_layer_compute: u64,
    /// Std-dev of zero-mean Gaussian jitter added to each layer's compute,
    /// truncated so compute stays positive.
    pub jitter_sigma: f64,
    /// Accelerator invocations issued at the end of each layer.
    pub amx_calls_per_layer: usize,
}

impl Default for MoeConfig {
    fn default() -> Self {
        MoeConfig {
            layers_high: 24,
            layers_low: 16,
            per_layer_compute: 50_000,
            jitter_sigma: 8_000.0,
            amx_calls_per_layer: 1,
        }
    }
}

impl MoeConfig {
    /// Default config with `layers_low = layers_high - gap`.
    pub fn with_gap(gap: usize) -> Result<Self> {
        let mut cfg = MoeConfig::default();
        if gap == 0 || gap >= cfg.layers_high {
            return Err(Error::InvalidConfig(format!(
                "layer gap {gap} must be in 1..{}",
                cfg.layers_high
            )));
        }
        cfg.layers_low = cfg.layers_high - gap;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Depth difference between the two paths.
    pub fn gap(&self) -> usize {
        self.layers_high - self.layers_low
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers_low == 0 || self.layers_high == 0 {
            return Err(Error::InvalidConfig("layer counts must be positive".into()));
        }
        if self.layers_low >= self.layers_high {
            return Err(Error::InvalidConfig(format!(
                "layers_low {} must be below layers_high {}",
                self.layers_low, self.layers_high
            )));
        }
        if self.per_layer_compute == 0 {
            return Err(Error::InvalidConfig("per_layer_compute must be positive".into()));
        }
        if self.jitter_sigma < 0.0 || !self.jitter_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "jitter_sigma {} must be finite and non-negative",
                self.jitter_sigma
            )));
        }
        if self.amx_calls_per_layer == 0 {
            return Err(Error::InvalidConfig("amx_calls_per_layer must be positive".into()));
        }
        Ok(())
    }
}

/// Build one expert-routing trace. `secret = true` takes the deep path.
/// Per-layer compute is `per_layer_compute + N(0, jitter_sigma)`, resampled
/// while the draw would push compute to zero or below.
pub fn moe_trace(cfg: &MoeConfig, secret: bool, rng: &mut SeededRng) -> Result<GadgetTrace> {
    cfg.validate()?;
    let layers = if secret { cfg.layers_high } else { cfg.layers_low };
    let mut events = Vec::with_capacity(layers * (1 + cfg.amx_calls_per_layer));
    let nominal = cfg.per_layer_compute as f64;
    for _ in 0..layers {
        let mut jitter = rng.gaussian(0.0, cfg.jitter_sigma);
        while jitter <= -nominal {
            jitter = rng.gaussian(0.0, cfg.jitter_sigma);
        }
        let compute = ((nominal + jitter).round() as u64).max(1);
        events.push(TraceEvent::Compute(compute));
        for _ in 0..cfg.amx_calls_per_layer {
            events.push(TraceEvent::AccelInvoke);
        }
    }
    Ok(GadgetTrace::new(events, secret))
}

/// Early-exit victim: a fixed-depth network that may leave after
/// `exit_after` layers and pad the remaining wall time with plain compute.
/// Deterministic — layer compute has no jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyExitConfig {
    /// Full network depth.
    pub total_layers: usize,
    /// Layers executed before the early-exit ramp fires.
    pub exit_after: usize,
    /// Compute cycles per layer.
    pub per_layer_compute: u64,
    /// Gap between victim completion and the attacker's probe invocation.
    pub probe_setup_delay: u64,
}

impl Default for EarlyExitConfig {
    fn default() -> Self {
        EarlyExitConfig {
            total_layers: 6,
            exit_after: 2,
            per_layer_compute: 12_000,
            probe_setup_delay: 1_000,
        }
    }
}

impl EarlyExitConfig {
    /// Default config tuned so the exit path skips `skipped` layers.
    pub fn with_skipped(skipped: usize) -> Result<Self> {
        let mut cfg = EarlyExitConfig::default();
        if skipped == 0 || skipped >= cfg.total_layers {
            return Err(Error::InvalidConfig(format!(
                "skipped layer count {skipped} must be in 1..{}",
                cfg.total_layers
            )));
        }
        cfg.exit_after = cfg.total_layers - skipped;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Layers the exit path skips.
    pub fn skipped(&self) -> usize {
        self.total_layers - self.exit_after
    }

    /// Compute padding appended on the exit path so both paths burn the same
    /// plain-compute budget.
    pub fn padding(&self) -> u64 {
        self.skipped() as u64 * self.per_layer_compute
    }

    pub fn validate(&self) -> Result<()> {
        if self.exit_after == 0 {
            return Err(Error::InvalidConfig("exit_after must be positive".into()));
        }
        if self.exit_after >= self.total_layers {
            return Err(Error::InvalidConfig(format!(
                "exit_after {} must be below total_layers {}",
                self.exit_after, self.total_layers
            )));
        }
        if self.per_layer_compute == 0 {
            return Err(Error::InvalidConfig("per_layer_compute must be positive".into()));
        }
        Ok(())
    }
}

/// Build one early-exit trace. `secret = true` exits early: it runs
/// `exit_after` accelerated layers and pads the rest with plain compute, so
/// both paths issue the same total compute but the exit path stops touching
/// the accelerator sooner.
pub fn early_exit_trace(cfg: &EarlyExitConfig, secret: bool) -> Result<GadgetTrace> {
    cfg.validate()?;
    let executed = if secret { cfg.exit_after } else { cfg.total_layers };
    let mut events = Vec::with_capacity(2 * cfg.total_layers);
    for _ in 0..executed {
        events.push(TraceEvent::Compute(cfg.per_layer_compute));
        events.push(TraceEvent::AccelInvoke);
    }
    if secret {
        events.push(TraceEvent::Compute(cfg.padding()));
    }
    Ok(GadgetTrace::new(events, secret))
}

/// Behavioral membership model layered on the early-exit gadget: members of
/// the training set trip the exit ramp more often than non-members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipModel {
    /// P(early exit | member).
    pub p_exit_member: f64,
    /// P(early exit | non-member).
    pub p_exit_nonmember: f64,
}

impl Default for MembershipModel {
    fn default() -> Self {
        MembershipModel { p_exit_member: 0.78, p_exit_nonmember: 0.16 }
    }
}

impl MembershipModel {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("p_exit_member", self.p_exit_member),
            ("p_exit_nonmember", self.p_exit_nonmember),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(Error::InvalidProbability { name, value });
            }
        }
        Ok(())
    }

    /// Sample whether one inference on a (non-)member input exits early.
    pub fn sample_exit(&self, is_member: bool, rng: &mut SeededRng) -> Result<bool> {
        self.validate()?;
        let p = if is_member { self.p_exit_member } else { self.p_exit_nonmember };
        Ok(rng.bernoulli(p))
    }
}

/// Timing record of one executed trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceExecution {
    /// Trace start time (cycles).
    pub start: u64,
    /// Completion time of the final event.
    pub end: u64,
    /// Completion time of each accelerator invocation, in order.
    pub invoke_completions: Vec<u64>,
    /// Observed latency of each accelerator invocation, in order.
    pub invoke_latencies: Vec<u64>,
}

impl TraceExecution {
    /// Wall-clock duration of the trace.
    pub fn duration(&self) -> u64 {
        self.end - self.start
    }
}

/// Run a trace against an accelerator unit starting at `start`. Compute
/// events advance the clock; invoke events go through the unit and advance
/// the clock by the observed rewarm latency.
pub fn execute_trace<I: Invoker>(
    unit: &mut I,
    start: u64,
    trace: &GadgetTrace,
) -> Result<TraceExecution> {
    let mut now = start;
    let mut invoke_completions = Vec::new();
    let mut invoke_latencies = Vec::new();
    for event in trace.events() {
        match event {
            TraceEvent::Compute(cycles) => now += cycles,
            TraceEvent::AccelInvoke => {
                let latency = unit.invoke(now)?;
                now += latency;
                invoke_completions.push(now);
                invoke_latencies.push(latency);
            }
        }
    }
    Ok(TraceExecution { start, end: now, invoke_completions, invoke_latencies })
}
