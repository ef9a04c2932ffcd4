//! Defense policies and their cost curves.
//!
//! Two deployable policies are modeled against the gating channel: locking
//! the unit into a fixed stage (trading always-on power against rewarm
//! latency) and flushing unit state on context switches (so a probe after a
//! switch always sees the deepest stage). Overhead curves are anchored to
//! measured power/performance points per policy and switch rate.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attacker::{fit_and_score, AttackReport, Observation};
use crate::error::{Error, Result};
use crate::gadgets::{early_exit_trace, execute_trace, EarlyExitConfig};
use crate::power_gate::{AcceleratorState, Invoker, PowerGateTable};
use crate::stats::SeededRng;

/// A gating defense policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MitigationPolicy {
    /// Hardware behaves as shipped.
    NoMitigation,
    /// The unit is pinned to one stage: every invocation pays exactly that
    /// stage's latency and the unit never sinks deeper.
    FixedStage(usize),
    /// Hardware behaves as shipped, but unit state is flushed on every
    /// context switch, so cross-context probes start from the deepest stage.
    ResetOnSwitch,
}

impl fmt::Display for MitigationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MitigationPolicy::NoMitigation => write!(f, "none"),
            MitigationPolicy::FixedStage(s) => write!(f, "fixed:{s}"),
            MitigationPolicy::ResetOnSwitch => write!(f, "reset"),
        }
    }
}

impl FromStr for MitigationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MitigationPolicy::NoMitigation),
            "reset" => Ok(MitigationPolicy::ResetOnSwitch),
            other => match other.strip_prefix("fixed:").and_then(|n| n.parse().ok()) {
                Some(stage) => Ok(MitigationPolicy::FixedStage(stage)),
                None => Err(Error::InvalidConfig(format!(
                    "unknown policy `{other}` (expected none, fixed:<stage>, reset)"
                ))),
            },
        }
    }
}

/// Issue one invocation through a policy. Fixed-stage policies charge their
/// stage's latency regardless of idle time; the others delegate to the bare
/// state machine. Clock regressions are rejected in all cases.
pub fn mitigated_invoke(
    policy: &MitigationPolicy,
    state: &mut AcceleratorState,
    now: u64,
) -> Result<u64> {
    match policy {
        MitigationPolicy::NoMitigation | MitigationPolicy::ResetOnSwitch => state.invoke(now),
        MitigationPolicy::FixedStage(stage) => {
            if let Some(last) = state.last_use() {
                if now < last {
                    return Err(Error::ClockRegression { now, last_use: last });
                }
            }
            let latency = state.table().stage(*stage)?.latency;
            state.record_completion(now + latency);
            Ok(latency)
        }
    }
}

/// Apply a context switch: under [`MitigationPolicy::ResetOnSwitch`] the
/// unit's usage history is flushed (next invoke pays the deepest stage);
/// other policies leave the unit untouched.
pub fn context_switch(policy: &MitigationPolicy, state: &mut AcceleratorState) {
    if matches!(policy, MitigationPolicy::ResetOnSwitch) {
        state.reset();
    }
}

/// An accelerator unit wrapped in a policy; usable anywhere a bare unit is.
#[derive(Debug, Clone)]
pub struct MitigatedAccelerator {
    policy: MitigationPolicy,
    state: AcceleratorState,
}

impl MitigatedAccelerator {
    pub fn new(policy: MitigationPolicy, table: Arc<PowerGateTable>) -> Result<Self> {
        if let MitigationPolicy::FixedStage(stage) = policy {
            table.stage(stage)?; // fail early on invalid stage ids
        }
        Ok(MitigatedAccelerator { policy, state: AcceleratorState::new(table) })
    }

    pub fn policy(&self) -> &MitigationPolicy {
        &self.policy
    }

    pub fn state(&self) -> &AcceleratorState {
        &self.state
    }

    pub fn invoke(&mut self, now: u64) -> Result<u64> {
        mitigated_invoke(&self.policy, &mut self.state, now)
    }

    pub fn context_switch(&mut self) {
        context_switch(&self.policy, &mut self.state);
    }
}

impl Invoker for MitigatedAccelerator {
    fn invoke(&mut self, now: u64) -> Result<u64> {
        MitigatedAccelerator::invoke(self, now)
    }
}

/// Constant (power %, perf %) overhead per locked stage, shallowest first.
pub const FIXED_STAGE_OVERHEADS: [(f64, f64); 5] =
    [(12.0, 0.0), (8.1, 2.5), (5.0, 11.1), (2.6, 19.0), (0.0, 35.0)];

/// Reset-on-switch power overhead anchors: (switches per second, %).
pub const RESET_POWER_ANCHORS: [(f64, f64); 10] = [
    (0.0, 0.0),
    (10.0, 0.6),
    (50.0, 1.9),
    (100.0, 3.5),
    (200.0, 5.7),
    (300.0, 7.0),
    (400.0, 8.4),
    (500.0, 9.3),
    (750.0, 10.8),
    (1000.0, 11.6),
];

/// Reset-on-switch performance overhead anchors: (switches per second, %).
pub const RESET_PERF_ANCHORS: [(f64, f64); 10] = [
    (0.0, 0.0),
    (10.0, 1.0),
    (50.0, 3.5),
    (100.0, 6.0),
    (200.0, 10.0),
    (300.0, 13.5),
    (400.0, 17.0),
    (500.0, 20.0),
    (750.0, 25.0),
    (1000.0, 30.0),
];

fn interpolate(anchors: &[(f64, f64)], rate: f64) -> f64 {
    let last = anchors.last().expect("anchor tables are non-empty");
    if rate >= last.0 {
        return last.1; // clamp past the measured range
    }
    let idx = anchors.partition_point(|(r, _)| *r <= rate);
    let (r0, v0) = anchors[idx - 1];
    let (r1, v1) = anchors[idx];
    v0 + (rate - r0) / (r1 - r0) * (v1 - v0)
}

/// Power and performance overhead (percent) of a policy at a context-switch
/// rate. Fixed-stage costs are rate-independent; reset-on-switch costs
/// interpolate linearly between the measured anchors and clamp past the last
/// one.
pub fn overhead(policy: &MitigationPolicy, switch_rate: f64) -> Result<(f64, f64)> {
    if switch_rate < 0.0 || !switch_rate.is_finite() {
        return Err(Error::InvalidSwitchRate(switch_rate));
    }
    match policy {
        MitigationPolicy::NoMitigation => Ok((0.0, 0.0)),
        MitigationPolicy::FixedStage(stage) => {
            FIXED_STAGE_OVERHEADS.get(*stage).copied().ok_or(Error::UnknownStage {
                stage: *stage,
                stages: FIXED_STAGE_OVERHEADS.len(),
            })
        }
        MitigationPolicy::ResetOnSwitch => Ok((
            interpolate(&RESET_POWER_ANCHORS, switch_rate),
            interpolate(&RESET_PERF_ANCHORS, switch_rate),
        )),
    }
}

/// One policy's overhead sampled over a switch-rate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadCurve {
    pub policy: MitigationPolicy,
    /// Rows of (switch rate per second, power %, perf %).
    pub points: Vec<(f64, f64, f64)>,
}

/// Sample a policy's overhead over the given switch rates.
pub fn overhead_curve(
    policy: &MitigationPolicy,
    rates: impl IntoIterator<Item = f64>,
) -> Result<OverheadCurve> {
    let points = rates
        .into_iter()
        .map(|rate| overhead(policy, rate).map(|(p, f)| (rate, p, f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(OverheadCurve { policy: *policy, points })
}

/// Re-run the early-exit recovery attack with every invocation routed
/// through a policy. Under reset-on-switch, a context switch lands between
/// the victim's completion and the attacker's probe — the cross-context
/// boundary the policy is designed to scrub.
pub fn leakage_under_policy(
    table: &Arc<PowerGateTable>,
    policy: &MitigationPolicy,
    cfg: &EarlyExitConfig,
    trials: usize,
    calibration_trials: usize,
    seed: u64,
) -> Result<AttackReport> {
    cfg.validate()?;
    if trials == 0 || calibration_trials == 0 {
        return Err(Error::InvalidConfig("trial counts must be positive".into()));
    }
    let measure = |secret: bool| -> Result<f64> {
        let trace = early_exit_trace(cfg, secret)?;
        let mut unit = MitigatedAccelerator::new(*policy, Arc::clone(table))?;
        let exec = execute_trace(&mut unit, 0, &trace)?;
        unit.context_switch();
        Ok(unit.invoke(exec.end + cfg.probe_setup_delay)? as f64)
    };

    let mut cal_negative = Vec::with_capacity(calibration_trials);
    let mut cal_positive = Vec::with_capacity(calibration_trials);
    for _ in 0..calibration_trials {
        cal_negative.push(measure(false)?);
        cal_positive.push(measure(true)?);
    }

    let root = SeededRng::new(seed);
    let mut observations = Vec::with_capacity(trials);
    for i in 0..trials as u64 {
        let mut sub = root.substream(i);
        let secret = sub.bit();
        observations.push(Observation { value: measure(secret)?, truth: secret });
    }
    fit_and_score(&cal_negative, &cal_positive, observations)
}
