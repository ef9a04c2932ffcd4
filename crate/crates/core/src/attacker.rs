//! Observer-side measurement and classification.
//!
//! The attacker shares an accelerator unit with the victim but sees none of
//! its state directly: the only primitive is issuing an invocation of its own
//! and timing the rewarm. Everything else — threshold fitting, polarity
//! detection, scoring — is built on those timed probes. Ground-truth labels
//! ride along on [`Observation`]s strictly for scoring; no classification
//! decision reads them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gadgets::{
    early_exit_trace, execute_trace, moe_trace, EarlyExitConfig, MembershipModel, MoeConfig,
};
use crate::power_gate::{AcceleratorState, Invoker, PowerGateTable};
use crate::stats::{mean, SeededRng};

/// Default head start the probe schedule grants itself relative to the
/// nominal deep-path completion time (cycles).
pub const DEFAULT_PROBE_LEAD: u64 = 185_000;
/// Default gap between a victim's completion and a deferred probe (cycles).
pub const DEFAULT_PROBE_SETUP_DELAY: u64 = 1_000;
/// Default number of forced-secret calibration trials per class.
pub const DEFAULT_CALIBRATION_TRIALS: usize = 200;

const CAL_NEG_STREAM: u64 = 1 << 40;
const CAL_POS_STREAM: u64 = 2 << 40;

/// One scored measurement: the probed value plus ground truth for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Measured probe latency (cycles).
    pub value: f64,
    /// Ground truth of the victim's secret bit, copied on after measurement.
    pub truth: bool,
}

/// Time one attacker invocation against a shared unit.
pub fn probe<I: Invoker>(unit: &mut I, now: u64) -> Result<u64> {
    unit.invoke(now)
}

/// Idle time to wait after a completion so the unit has entered `stage`.
pub fn reset_wait(table: &PowerGateTable, stage: usize) -> Result<u64> {
    Ok(table.stage(stage)?.min_idle)
}

/// Midpoint threshold fitted from two calibration latency classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    tau: f64,
}

impl Threshold {
    /// Fit `tau` as the midpoint of the two class means. `samples_low` must
    /// average strictly below `samples_high`; empty, inverted, or
    /// indistinguishable classes are errors.
    pub fn calibrate(samples_low: &[f64], samples_high: &[f64]) -> Result<Self> {
        if samples_low.is_empty() {
            return Err(Error::EmptyCalibration("samples_low"));
        }
        if samples_high.is_empty() {
            return Err(Error::EmptyCalibration("samples_high"));
        }
        let mean_low = mean(samples_low);
        let mean_high = mean(samples_high);
        if mean_low > mean_high {
            return Err(Error::InvertedCalibration { mean_low, mean_high });
        }
        if mean_low == mean_high {
            return Err(Error::DegenerateCalibration { mean: mean_low });
        }
        Ok(Threshold { tau: (mean_low + mean_high) / 2.0 })
    }

    /// Threshold at an explicit cut point.
    pub fn at(tau: f64) -> Self {
        Threshold { tau }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Classify one measurement: `true` iff it lies strictly above `tau`.
    pub fn classify(&self, value: f64) -> bool {
        value > self.tau
    }
}

/// Confusion counts of one scored run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
}

impl ConfusionMetrics {
    /// Tally (truth, prediction) pairs.
    pub fn from_pairs<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let mut m = ConfusionMetrics::default();
        for (truth, pred) in pairs {
            match (truth, pred) {
                (true, true) => m.true_positives += 1,
                (false, true) => m.false_positives += 1,
                (false, false) => m.true_negatives += 1,
                (true, false) => m.false_negatives += 1,
            }
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            f64::NAN
        } else {
            num as f64 / den as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.true_positives + self.true_negatives, self.total())
    }

    /// True-positive rate (recall).
    pub fn tpr(&self) -> f64 {
        Self::ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    /// False-positive rate.
    pub fn fpr(&self) -> f64 {
        Self::ratio(self.false_positives, self.false_positives + self.true_negatives)
    }

    /// True-negative rate (specificity).
    pub fn tnr(&self) -> f64 {
        Self::ratio(self.true_negatives, self.false_positives + self.true_negatives)
    }

    /// Precision; `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let predicted = self.true_positives + self.false_positives;
        (predicted > 0).then(|| self.true_positives as f64 / predicted as f64)
    }
}

/// One ROC curve: `(fpr, tpr)` points from `(0,0)` to `(1,1)` plus the
/// trapezoidal area under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweep every distinct score as a threshold (ties grouped) over
/// `(score, truth)` pairs, higher score meaning "more positive". Errors if
/// only one class is present.
pub fn roc_curve(scored: &[(f64, bool)]) -> Result<RocCurve> {
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidConfig("ROC scores must be finite".into()));
    }
    let pos = scored.iter().filter(|(_, truth)| *truth).count() as u64;
    let neg = scored.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores checked finite"));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let cut = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == cut {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("seeded with the origin");
        let next = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (next.0 - prev.0) * (prev.1 + next.1) / 2.0;
        points.push(next);
    }
    Ok(RocCurve { points, auc })
}

/// Outcome of one calibrated attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    /// Scored (non-calibration) trials.
    pub trials: usize,
    /// Fitted cut point, absent when calibration was degenerate.
    pub threshold: Option<f64>,
    /// True when the positive class showed the *smaller* probe latency.
    pub inverted: bool,
    /// True when the calibration classes were indistinguishable; the
    /// classifier then falls back to predicting the negative class.
    pub degenerate: bool,
    /// Mean calibration latency of the negative class.
    pub cal_mean_negative: f64,
    /// Mean calibration latency of the positive class.
    pub cal_mean_positive: f64,
    pub metrics: ConfusionMetrics,
    pub accuracy: f64,
    /// Area under the ROC of the polarity-oriented scores.
    pub auc: f64,
    /// Per-trial scored measurements (not serialized).
    #[serde(skip)]
    pub observations: Vec<Observation>,
    /// Per-trial predictions, aligned with `observations` (not serialized).
    #[serde(skip)]
    pub predictions: Vec<bool>,
}

/// Fit a midpoint threshold on forced-secret calibration samples (with
/// polarity auto-detection) and score a set of observations against it.
///
/// When both calibration classes have exactly the same mean there is nothing
/// to fit; the classifier degrades to always predicting the negative class,
/// which scores at the negative-class base rate with an uninformative ROC.
pub fn fit_and_score(
    cal_negative: &[f64],
    cal_positive: &[f64],
    observations: Vec<Observation>,
) -> Result<AttackReport> {
    if cal_negative.is_empty() || cal_positive.is_empty() {
        return Err(Error::EmptyCalibration(if cal_negative.is_empty() {
            "cal_negative"
        } else {
            "cal_positive"
        }));
    }
    let mean_neg = mean(cal_negative);
    let mean_pos = mean(cal_positive);
    let degenerate = mean_neg == mean_pos;
    let inverted = mean_pos < mean_neg;

    let threshold = if degenerate {
        None
    } else if inverted {
        Some(Threshold::calibrate(cal_positive, cal_negative)?)
    } else {
        Some(Threshold::calibrate(cal_negative, cal_positive)?)
    };

    let predict = |value: f64| -> bool {
        match threshold {
            None => false,
            Some(t) if inverted => value < t.tau(),
            Some(t) => t.classify(value),
        }
    };
    let predictions: Vec<bool> = observations.iter().map(|o| predict(o.value)).collect();
    let metrics = ConfusionMetrics::from_pairs(
        observations.iter().zip(&predictions).map(|(o, &p)| (o.truth, p)),
    );
    let oriented: Vec<(f64, bool)> = observations
        .iter()
        .map(|o| (if inverted && !degenerate { -o.value } else { o.value }, o.truth))
        .collect();
    let auc = match roc_curve(&oriented) {
        Ok(curve) => curve.auc,
        // A single-class observation set has no ROC; report chance.
        Err(Error::SingleClass) => 0.5,
        Err(e) => return Err(e),
    };

    Ok(AttackReport {
        trials: observations.len(),
        threshold: threshold.map(|t| t.tau()),
        inverted,
        degenerate,
        cal_mean_negative: mean_neg,
        cal_mean_positive: mean_pos,
        metrics,
        accuracy: metrics.accuracy(),
        auc,
        observations,
        predictions,
    })
}

/// Attack configuration for the expert-routing victim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeAttackConfig {
    pub gadget: MoeConfig,
    /// How far before the nominal deep-path completion the probe is aimed.
    pub probe_lead: u64,
    /// Delay between a victim completion and a deferred probe.
    pub probe_setup_delay: u64,
    /// Forced-secret calibration trials per class.
    pub calibration_trials: usize,
}

impl Default for MoeAttackConfig {
    fn default() -> Self {
        MoeAttackConfig {
            gadget: MoeConfig::default(),
            probe_lead: DEFAULT_PROBE_LEAD,
            probe_setup_delay: DEFAULT_PROBE_SETUP_DELAY,
            calibration_trials: DEFAULT_CALIBRATION_TRIALS,
        }
    }
}

/// Jitter-free wall time of the first `layers` layers of an expert-routing
/// trace on a fresh unit: the attacker's planning model of the victim.
pub fn nominal_moe_duration(table: &PowerGateTable, cfg: &MoeConfig, layers: usize) -> u64 {
    let cold = table.deepest().latency;
    let warm = table.stage_for_idle(cfg.per_layer_compute).latency;
    let back_to_back = table.stage_for_idle(0).latency;
    let mut total = 0u64;
    for layer in 0..layers as u64 {
        total += cfg.per_layer_compute;
        total += if layer == 0 { cold } else { warm };
        total += (cfg.amx_calls_per_layer as u64 - 1) * back_to_back;
    }
    total
}

/// Depth-recovery attack against the expert-routing victim.
///
/// Per trial the victim runs one inference with a fresh secret on a fresh
/// unit. The attacker aims one probe at a fixed wall-clock point shortly
/// before the nominal deep-path completion; the unit is non-preemptive, so a
/// probe aimed inside a still-running inference is serviced
/// `probe_setup_delay` after the victim completes instead. A deep-path
/// victim therefore yields a just-idle rewarm while a shallow-path victim
/// has already left the unit cooling for its skipped layers.
pub fn run_moe_attack(
    table: &Arc<PowerGateTable>,
    cfg: &MoeAttackConfig,
    trials: usize,
    seed: u64,
) -> Result<AttackReport> {
    cfg.gadget.validate()?;
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    if cfg.calibration_trials == 0 {
        return Err(Error::InvalidConfig("calibration_trials must be positive".into()));
    }
    let nominal_high = nominal_moe_duration(table, &cfg.gadget, cfg.gadget.layers_high);
    if cfg.probe_lead >= nominal_high {
        return Err(Error::InvalidConfig(format!(
            "probe_lead {} must be below the nominal deep-path duration {}",
            cfg.probe_lead, nominal_high
        )));
    }
    let probe_at = nominal_high - cfg.probe_lead;

    let measure = |secret: bool, rng: &mut SeededRng| -> Result<f64> {
        let trace = moe_trace(&cfg.gadget, secret, rng)?;
        let mut unit = AcceleratorState::new(Arc::clone(table));
        let exec = execute_trace(&mut unit, 0, &trace)?;
        let t = if probe_at < exec.end { exec.end + cfg.probe_setup_delay } else { probe_at };
        Ok(probe(&mut unit, t)? as f64)
    };

    let root = SeededRng::new(seed);
    let mut cal_negative = Vec::with_capacity(cfg.calibration_trials);
    let mut cal_positive = Vec::with_capacity(cfg.calibration_trials);
    for j in 0..cfg.calibration_trials as u64 {
        cal_negative.push(measure(false, &mut root.substream(CAL_NEG_STREAM + j))?);
        cal_positive.push(measure(true, &mut root.substream(CAL_POS_STREAM + j))?);
    }

    let mut observations = Vec::with_capacity(trials);
    for i in 0..trials as u64 {
        let mut sub = root.substream(i);
        let secret = sub.bit();
        let value = measure(secret, &mut sub)?;
        observations.push(Observation { value, truth: secret });
    }
    fit_and_score(&cal_negative, &cal_positive, observations)
}

/// Early-exit recovery attack, generic over how units are built so gating
/// policies can be layered underneath (`fresh_unit` is called once per
/// trial, calibration included).
pub fn run_early_exit_attack_with<I, F>(
    mut fresh_unit: F,
    cfg: &EarlyExitConfig,
    trials: usize,
    calibration_trials: usize,
    seed: u64,
) -> Result<AttackReport>
where
    I: Invoker,
    F: FnMut() -> I,
{
    cfg.validate()?;
    if trials == 0 || calibration_trials == 0 {
        return Err(Error::InvalidConfig("trial counts must be positive".into()));
    }
    let measure = |secret: bool, unit: &mut I| -> Result<f64> {
        let trace = early_exit_trace(cfg, secret)?;
        let exec = execute_trace(unit, 0, &trace)?;
        Ok(probe(unit, exec.end + cfg.probe_setup_delay)? as f64)
    };

    let mut cal_negative = Vec::with_capacity(calibration_trials);
    let mut cal_positive = Vec::with_capacity(calibration_trials);
    for _ in 0..calibration_trials {
        cal_negative.push(measure(false, &mut fresh_unit())?);
        cal_positive.push(measure(true, &mut fresh_unit())?);
    }

    let root = SeededRng::new(seed);
    let mut observations = Vec::with_capacity(trials);
    for i in 0..trials as u64 {
        let mut sub = root.substream(i);
        let secret = sub.bit();
        let value = measure(secret, &mut fresh_unit())?;
        observations.push(Observation { value, truth: secret });
    }
    fit_and_score(&cal_negative, &cal_positive, observations)
}

/// Early-exit recovery attack on an unmitigated unit.
pub fn run_early_exit_attack(
    table: &Arc<PowerGateTable>,
    cfg: &EarlyExitConfig,
    trials: usize,
    seed: u64,
) -> Result<AttackReport> {
    run_early_exit_attack_with(
        || AcceleratorState::new(Arc::clone(table)),
        cfg,
        trials,
        DEFAULT_CALIBRATION_TRIALS,
        seed,
    )
}

/// Membership-inference configuration: the behavioral exit model, the
/// early-exit gadget underneath, and the member prior of the query stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipAttackConfig {
    pub model: MembershipModel,
    pub gadget: EarlyExitConfig,
    /// Fraction of scored queries drawn from the training set.
    pub member_prior: f64,
    pub calibration_trials: usize,
}

impl Default for MembershipAttackConfig {
    fn default() -> Self {
        MembershipAttackConfig {
            model: MembershipModel::default(),
            gadget: EarlyExitConfig::default(),
            member_prior: 0.5,
            calibration_trials: DEFAULT_CALIBRATION_TRIALS,
        }
    }
}

/// Membership-inference outcome: the attack report is scored against
/// membership ground truth, not against the (noisy) exit bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub report: AttackReport,
    pub member_prior: f64,
    /// Fraction of scored trials that were actually members.
    pub observed_member_fraction: f64,
}

/// Membership inference through the early-exit channel: the attacker
/// recovers each query's exit bit from the accelerator stage and predicts
/// "member" exactly when an early exit was inferred. Calibration forces the
/// exit bit directly (attacker-chosen inputs with known behavior).
pub fn run_membership_attack(
    table: &Arc<PowerGateTable>,
    cfg: &MembershipAttackConfig,
    trials: usize,
    seed: u64,
) -> Result<MembershipReport> {
    cfg.model.validate()?;
    cfg.gadget.validate()?;
    if !(0.0..=1.0).contains(&cfg.member_prior) || cfg.member_prior.is_nan() {
        return Err(Error::InvalidProbability { name: "member_prior", value: cfg.member_prior });
    }
    if trials == 0 || cfg.calibration_trials == 0 {
        return Err(Error::InvalidConfig("trial counts must be positive".into()));
    }
    let measure = |exit: bool| -> Result<f64> {
        let trace = early_exit_trace(&cfg.gadget, exit)?;
        let mut unit = AcceleratorState::new(Arc::clone(table));
        let exec = execute_trace(&mut unit, 0, &trace)?;
        Ok(probe(&mut unit, exec.end + cfg.gadget.probe_setup_delay)? as f64)
    };

    let mut cal_negative = Vec::with_capacity(cfg.calibration_trials);
    let mut cal_positive = Vec::with_capacity(cfg.calibration_trials);
    for _ in 0..cfg.calibration_trials {
        cal_negative.push(measure(false)?);
        cal_positive.push(measure(true)?);
    }

    let root = SeededRng::new(seed);
    let mut observations = Vec::with_capacity(trials);
    let mut members = 0usize;
    for i in 0..trials as u64 {
        let mut sub = root.substream(i);
        let is_member = sub.bernoulli(cfg.member_prior);
        members += usize::from(is_member);
        let exit = cfg.model.sample_exit(is_member, &mut sub)?;
        let value = measure(exit)?;
        observations.push(Observation { value, truth: is_member });
    }
    let report = fit_and_score(&cal_negative, &cal_positive, observations)?;
    Ok(MembershipReport {
        report,
        member_prior: cfg.member_prior,
        observed_member_fraction: members as f64 / trials as f64,
    })
}
