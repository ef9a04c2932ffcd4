//! Idle-stage power-gating state machine.
//!
//! The accelerator steps through progressively deeper sleep stages as a
//! function of how long it has been idle. Each stage has an entry threshold
//! (minimum idle), a rewarm latency charged to the first instruction issued
//! from that stage, and a package power draw while parked there. An
//! invocation always rewarms the unit fully: the next idle period is measured
//! from the completion of that invocation.
//!
//! Stage thresholds partition `[0, inf)`, so every idle time maps to exactly
//! one stage.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// One sleep stage: entry threshold, rewarm cost, parked power.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    /// Stage index, 0 = fully awake tier.
    pub stage: usize,
    /// Minimum idle time (cycles) at which this stage is occupied.
    pub min_idle: u64,
    /// Rewarm latency (cycles) charged to an invocation issued from this stage.
    pub latency: u64,
    /// Package power (watts) while the unit is parked in this stage.
    pub power_watts: f64,
}

/// Immutable per-profile stage table. Freely shareable across states.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGateTable {
    profile: String,
    stages: Vec<StageSpec>,
}

/// Default profile: five stages with thresholds at 1e3/1e4/1e5/1e7 cycles,
/// rewarm latencies 50..20000 cycles, package power 145.0..138.0 W.
pub const DEFAULT_THRESHOLDS: [u64; 5] = [0, 1_000, 10_000, 100_000, 10_000_000];
pub const DEFAULT_LATENCIES: [u64; 5] = [50, 600, 6_000, 9_000, 20_000];
pub const DEFAULT_POWER_WATTS: [f64; 5] = [145.0, 143.0, 141.0, 139.5, 138.0];

/// Alternate wall-power calibration endpoints (stage 0 and deepest stage)
/// from direct measurement; see [`PowerGateTable::measured_power_profile`].
pub const MEASURED_POWER_ENDPOINTS_WATTS: (f64, f64) = (142.08, 138.49);

impl PowerGateTable {
    /// Validate and build a table. Invariants: at least one stage, first
    /// threshold 0, thresholds strictly increasing, latencies positive and
    /// non-decreasing, power positive and non-increasing, stage ids dense.
    pub fn new(profile: impl Into<String>, stages: Vec<StageSpec>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidTable("table has no stages".into()));
        }
        for (i, s) in stages.iter().enumerate() {
            if s.stage != i {
                return Err(Error::InvalidTable(format!(
                    "stage ids must be dense and ordered: record {i} has stage {}",
                    s.stage
                )));
            }
            if s.latency == 0 {
                return Err(Error::InvalidTable(format!("stage {i} has zero latency")));
            }
            if s.power_watts <= 0.0 || !s.power_watts.is_finite() {
                return Err(Error::InvalidTable(format!(
                    "stage {i} power {} is not positive",
                    s.power_watts
                )));
            }
        }
        if stages[0].min_idle != 0 {
            return Err(Error::InvalidTable(format!(
                "first threshold must be 0, got {}",
                stages[0].min_idle
            )));
        }
        for w in stages.windows(2) {
            if w[1].min_idle <= w[0].min_idle {
                return Err(Error::InvalidTable(format!(
                    "thresholds must be strictly increasing: stage {} has {} after {}",
                    w[1].stage, w[1].min_idle, w[0].min_idle
                )));
            }
            if w[1].latency < w[0].latency {
                return Err(Error::InvalidTable(format!(
                    "latencies must be non-decreasing: stage {} has {} after {}",
                    w[1].stage, w[1].latency, w[0].latency
                )));
            }
            if w[1].power_watts > w[0].power_watts {
                return Err(Error::InvalidTable(format!(
                    "power must be non-increasing: stage {} has {} after {}",
                    w[1].stage, w[1].power_watts, w[0].power_watts
                )));
            }
        }
        Ok(PowerGateTable { profile: profile.into(), stages })
    }

    /// The default latency/power staircase.
    pub fn default_profile() -> Self {
        Self::from_arrays("default", &DEFAULT_THRESHOLDS, &DEFAULT_LATENCIES, &DEFAULT_POWER_WATTS)
    }

    /// Default table with the C1E package state enabled: deeper gating is
    /// partially absorbed by the core sleep state, so stage 2 rewarms in 3000
    /// cycles and the deepest stage in 9000.
    pub fn c1e_profile() -> Self {
        let mut latencies = DEFAULT_LATENCIES;
        latencies[2] = 3_000;
        latencies[4] = 9_000;
        Self::from_arrays("c1e", &DEFAULT_THRESHOLDS, &latencies, &DEFAULT_POWER_WATTS)
    }

    /// Alternate power calibration measured at the wall: stage 0 draws
    /// 142.08 W and the deepest stage 138.49 W. Only the endpoints were
    /// measured; intermediate stages scale the default profile's steps
    /// affinely onto the measured range. Latencies are unchanged.
    pub fn measured_power_profile() -> Self {
        let (hi, lo) = MEASURED_POWER_ENDPOINTS_WATTS;
        let d_hi = DEFAULT_POWER_WATTS[0];
        let d_lo = DEFAULT_POWER_WATTS[4];
        let scale = (hi - lo) / (d_hi - d_lo);
        let powers: Vec<f64> = DEFAULT_POWER_WATTS
            .iter()
            .map(|&p| hi - (d_hi - p) * scale)
            .collect();
        let powers: [f64; 5] = powers.try_into().expect("five stages");
        Self::from_arrays("measured", &DEFAULT_THRESHOLDS, &DEFAULT_LATENCIES, &powers)
    }

    /// Look a built-in profile up by name (`default`, `c1e`, `measured`).
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default_profile()),
            "c1e" => Ok(Self::c1e_profile()),
            "measured" => Ok(Self::measured_power_profile()),
            other => Err(Error::InvalidConfig(format!("unknown profile `{other}`"))),
        }
    }

    fn from_arrays(name: &str, thr: &[u64; 5], lat: &[u64; 5], pow: &[f64; 5]) -> Self {
        let stages = (0..5)
            .map(|i| StageSpec {
                stage: i,
                min_idle: thr[i],
                latency: lat[i],
                power_watts: pow[i],
            })
            .collect();
        Self::new(name, stages).expect("built-in tables satisfy the invariants")
    }

    /// Parse a table from a structured text config: one record per line,
    /// `stage, min_idle, latency_cycles, power_watts`, `#` comments allowed,
    /// optional header line.
    pub fn from_config_str(profile: impl Into<String>, text: &str) -> Result<Self> {
        let mut stages = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if stages.is_empty() && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("stage")) {
                continue; // header row
            }
            if fields.len() != 4 {
                return Err(Error::ConfigParse {
                    line: lineno + 1,
                    key: "record".into(),
                    msg: format!("expected 4 comma-separated fields, got {}", fields.len()),
                });
            }
            let parse_u64 = |key: &str, s: &str| -> Result<u64> {
                s.parse().map_err(|_| Error::ConfigParse {
                    line: lineno + 1,
                    key: key.into(),
                    msg: format!("`{s}` is not a non-negative integer"),
                })
            };
            let power_watts: f64 = fields[3].parse().map_err(|_| Error::ConfigParse {
                line: lineno + 1,
                key: "power_watts".into(),
                msg: format!("`{}` is not a number", fields[3]),
            })?;
            stages.push(StageSpec {
                stage: parse_u64("stage", fields[0])? as usize,
                min_idle: parse_u64("min_idle", fields[1])?,
                latency: parse_u64("latency_cycles", fields[2])?,
                power_watts,
            });
        }
        Self::new(profile, stages)
    }

    pub fn profile(&self) -> &str {
        &self.profile
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn stage(&self, idx: usize) -> Result<&StageSpec> {
        self.stages.get(idx).ok_or(Error::UnknownStage { stage: idx, stages: self.stages.len() })
    }

    pub fn deepest(&self) -> &StageSpec {
        self.stages.last().expect("table is non-empty")
    }

    /// The stage occupied after `idle` cycles without an invocation.
    pub fn stage_for_idle(&self, idle: u64) -> &StageSpec {
        let idx = self.stages.partition_point(|s| s.min_idle <= idle);
        &self.stages[idx - 1]
    }
}

impl fmt::Display for PowerGateTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "profile {}", self.profile)?;
        for s in &self.stages {
            writeln!(
                f,
                "  stage {}: idle >= {:>10} cy -> latency {:>6} cy, {:.2} W",
                s.stage, s.min_idle, s.latency, s.power_watts
            )?;
        }
        Ok(())
    }
}

/// Per-core accelerator occupancy: the completion time of the most recent
/// invocation, or never-used (parked in the deepest stage).
#[derive(Debug, Clone)]
pub struct AcceleratorState {
    table: Arc<PowerGateTable>,
    last_use: Option<u64>,
}

impl AcceleratorState {
    /// Fresh unit: never invoked, parked in the deepest stage.
    pub fn new(table: Arc<PowerGateTable>) -> Self {
        AcceleratorState { table, last_use: None }
    }

    /// Unit whose previous invocation completed at `completion` (warm there).
    pub fn warmed(table: Arc<PowerGateTable>, completion: u64) -> Self {
        AcceleratorState { table, last_use: Some(completion) }
    }

    pub fn table(&self) -> &PowerGateTable {
        &self.table
    }

    pub fn shared_table(&self) -> Arc<PowerGateTable> {
        Arc::clone(&self.table)
    }

    /// Completion time of the last invocation, if any.
    pub fn last_use(&self) -> Option<u64> {
        self.last_use
    }

    /// Forget all usage history (parked in the deepest stage again).
    pub fn reset(&mut self) {
        self.last_use = None;
    }

    /// Record an invocation completing at `completion` without staging
    /// arithmetic; policy wrappers use this for their own bookkeeping.
    pub(crate) fn record_completion(&mut self, completion: u64) {
        self.last_use = Some(completion);
    }

    fn idle_at(&self, now: u64) -> Option<u64> {
        self.last_use.map(|t| now.saturating_sub(t))
    }

    /// Stage occupied at time `now`. A unit mid-invocation counts as fully
    /// warm; a never-used unit is in the deepest stage.
    pub fn stage_at(&self, now: u64) -> &StageSpec {
        match self.idle_at(now) {
            Some(idle) => self.table.stage_for_idle(idle),
            None => self.table.deepest(),
        }
    }

    /// Issue one accelerator invocation at `now`.
    ///
    /// Returns the rewarm latency for the stage reached after the idle
    /// interval `now - last_use` (deepest stage when never used). The
    /// invocation occupies the unit until `now + latency` and rewarms it
    /// fully, so the next idle interval is measured from that completion.
    /// Rejects `now` earlier than the previous completion.
    pub fn invoke(&mut self, now: u64) -> Result<u64> {
        if let Some(last) = self.last_use {
            if now < last {
                return Err(Error::ClockRegression { now, last_use: last });
            }
        }
        let latency = match self.idle_at(now) {
            Some(idle) => self.table.stage_for_idle(idle).latency,
            None => self.table.deepest().latency,
        };
        self.last_use = Some(now + latency);
        Ok(latency)
    }

    /// Package power draw at `now`, from the stage the unit occupies then.
    pub fn power_draw(&self, now: u64) -> f64 {
        self.stage_at(now).power_watts
    }
}

/// Anything that can service an accelerator invocation at a point in time:
/// a bare [`AcceleratorState`] or a unit wrapped in a gating policy.
pub trait Invoker {
    /// Issue one invocation at `now`; returns the observed latency in cycles.
    fn invoke(&mut self, now: u64) -> Result<u64>;
}

impl Invoker for AcceleratorState {
    fn invoke(&mut self, now: u64) -> Result<u64> {
        AcceleratorState::invoke(self, now)
    }
}

/// Measure the rewarm staircase: for each delay, run a warm-up invocation on
/// a fresh unit, idle exactly `delay` cycles past its completion, then time
/// one invocation. Deterministic.
pub fn characterize(table: &Arc<PowerGateTable>, delays: &[u64]) -> Vec<(u64, u64)> {
    assert!(!delays.is_empty(), "characterize needs at least one delay");
    delays
        .iter()
        .map(|&delay| {
            let mut state = AcceleratorState::new(Arc::clone(table));
            let warmup = state.invoke(0).expect("fresh state accepts t = 0");
            let timed_at = warmup + delay;
            let latency = state.invoke(timed_at).expect("monotone clock");
            (delay, latency)
        })
        .collect()
}

/// Geometric delay sweep: `points_per_decade` delays per decade from
/// `10^start_exp` through `10^end_exp`, decade boundaries exact.
pub fn geometric_sweep(start_exp: u32, end_exp: u32, points_per_decade: u32) -> Vec<u64> {
    assert!(end_exp >= start_exp && points_per_decade >= 1);
    let mut delays = Vec::new();
    for e in start_exp..end_exp {
        for k in 0..points_per_decade {
            let exp = e as f64 + k as f64 / points_per_decade as f64;
            delays.push(10f64.powf(exp).round() as u64);
        }
    }
    delays.push(10u64.pow(end_exp));
    delays.dedup();
    delays
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(table: PowerGateTable) -> Arc<PowerGateTable> {
        Arc::new(table)
    }

    #[test]
    fn default_table_values() {
        let t = PowerGateTable::default_profile();
        assert_eq!(t.stages().len(), 5);
        let lat: Vec<u64> = t.stages().iter().map(|s| s.latency).collect();
        assert_eq!(lat, vec![50, 600, 6_000, 9_000, 20_000]);
        let thr: Vec<u64> = t.stages().iter().map(|s| s.min_idle).collect();
        assert_eq!(thr, vec![0, 1_000, 10_000, 100_000, 10_000_000]);
        let pow: Vec<f64> = t.stages().iter().map(|s| s.power_watts).collect();
        assert_eq!(pow, vec![145.0, 143.0, 141.0, 139.5, 138.0]);
    }

    #[test]
    fn c1e_overrides_exactly_two_latencies() {
        let base = PowerGateTable::default_profile();
        let c1e = PowerGateTable::c1e_profile();
        assert_eq!(c1e.stage(2).unwrap().latency, 3_000);
        assert_eq!(c1e.stage(4).unwrap().latency, 9_000);
        for i in [0usize, 1, 3] {
            assert_eq!(
                c1e.stage(i).unwrap().latency,
                base.stage(i).unwrap().latency,
                "stage {i} latency must match the default profile"
            );
        }
        for i in 0..5 {
            assert_eq!(c1e.stage(i).unwrap().min_idle, base.stage(i).unwrap().min_idle);
            assert_eq!(c1e.stage(i).unwrap().power_watts, base.stage(i).unwrap().power_watts);
        }
    }

    #[test]
    fn measured_profile_anchors_endpoints() {
        let t = PowerGateTable::measured_power_profile();
        assert!((t.stage(0).unwrap().power_watts - 142.08).abs() < 1e-12);
        assert!((t.stage(4).unwrap().power_watts - 138.49).abs() < 1e-12);
        // Interior stages stay monotone between the endpoints.
        let pow: Vec<f64> = t.stages().iter().map(|s| s.power_watts).collect();
        assert!(pow.windows(2).all(|w| w[1] < w[0]));
        // Latencies identical to default.
        let lat: Vec<u64> = t.stages().iter().map(|s| s.latency).collect();
        assert_eq!(lat, vec![50, 600, 6_000, 9_000, 20_000]);
    }

    #[test]
    fn stage_for_idle_boundaries() {
        let t = PowerGateTable::default_profile();
        assert_eq!(t.stage_for_idle(0).stage, 0);
        assert_eq!(t.stage_for_idle(999).stage, 0);
        assert_eq!(t.stage_for_idle(1_000).stage, 1);
        assert_eq!(t.stage_for_idle(9_999).stage, 1);
        assert_eq!(t.stage_for_idle(10_000).stage, 2);
        assert_eq!(t.stage_for_idle(20_000).stage, 2);
        assert_eq!(t.stage_for_idle(100_000).stage, 3);
        assert_eq!(t.stage_for_idle(9_999_999).stage, 3);
        assert_eq!(t.stage_for_idle(10_000_000).stage, 4);
        assert_eq!(t.stage_for_idle(u64::MAX).stage, 4);
    }

    #[test]
    fn invoke_after_short_idle_is_warm() {
        let mut s = AcceleratorState::new(arc(PowerGateTable::default_profile()));
        s.invoke(0).unwrap(); // cold warm-up, completes at 20000
        assert_eq!(s.last_use(), Some(20_000));
        let lat = s.invoke(20_500).unwrap(); // idle 500 -> stage 0
        assert_eq!(lat, 50, "idle 500 cycles stays in stage 0");
        assert_eq!(s.last_use(), Some(20_550));
    }

    #[test]
    fn invoke_never_used_pays_deepest_latency() {
        let mut s = AcceleratorState::new(arc(PowerGateTable::default_profile()));
        assert_eq!(s.invoke(123).unwrap(), 20_000);
        let mut c1e = AcceleratorState::new(arc(PowerGateTable::c1e_profile()));
        assert_eq!(c1e.invoke(0).unwrap(), 9_000);
    }

    #[test]
    fn invoke_mid_stage_example() {
        // Idle 2e6 cycles sits in stage 3 -> 9000-cycle rewarm.
        let mut s = AcceleratorState::warmed(arc(PowerGateTable::default_profile()), 0);
        assert_eq!(s.invoke(2_000_000).unwrap(), 9_000);
    }

    #[test]
    fn invoke_rejects_clock_regression() {
        let mut s = AcceleratorState::new(arc(PowerGateTable::default_profile()));
        s.invoke(1_000).unwrap(); // completes at 21000
        let err = s.invoke(20_999).unwrap_err();
        assert!(matches!(err, Error::ClockRegression { now: 20_999, last_use: 21_000 }));
    }

    #[test]
    fn back_to_back_invokes_stay_warm() {
        let mut s = AcceleratorState::new(arc(PowerGateTable::default_profile()));
        let mut t = 0u64;
        t += s.invoke(t).unwrap();
        for _ in 0..5 {
            let lat = s.invoke(t).unwrap(); // idle 0
            assert_eq!(lat, 50);
            t += lat;
        }
    }

    #[test]
    fn power_draw_follows_stage() {
        let t = arc(PowerGateTable::default_profile());
        let never = AcceleratorState::new(Arc::clone(&t));
        assert_eq!(never.power_draw(5), 138.0, "never-used unit draws deepest-stage power");
        let s = AcceleratorState::warmed(Arc::clone(&t), 0);
        assert_eq!(s.power_draw(500), 145.0);
        assert_eq!(s.power_draw(5_000), 143.0);
        assert_eq!(s.power_draw(50_000), 141.0);
        assert_eq!(s.power_draw(500_000), 139.5);
        assert_eq!(s.power_draw(100_000_000), 138.0);
    }

    #[test]
    fn characterize_hits_every_stage_exactly() {
        let t = arc(PowerGateTable::default_profile());
        let rows = characterize(&t, &[100, 1_000, 10_000, 100_000, 10_000_000, 1_000_000_000]);
        let lat: Vec<u64> = rows.iter().map(|r| r.1).collect();
        assert_eq!(lat, vec![50, 600, 6_000, 9_000, 20_000, 20_000]);
    }

    #[test]
    fn characterize_sweep_has_five_plateaus() {
        let t = arc(PowerGateTable::default_profile());
        let rows = characterize(&t, &geometric_sweep(2, 9, 8));
        let mut latencies: Vec<u64> = rows.iter().map(|r| r.1).collect();
        let mut sorted = latencies.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted, vec![50, 600, 6_000, 9_000, 20_000]);
        latencies.dedup();
        assert_eq!(latencies, vec![50, 600, 6_000, 9_000, 20_000], "staircase is monotone");
    }

    #[test]
    fn geometric_sweep_contains_exact_decades() {
        let sweep = geometric_sweep(2, 9, 16);
        for decade in [100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000, 1_000_000_000] {
            assert!(sweep.contains(&decade), "sweep missing exact decade {decade}");
        }
        assert!(sweep.windows(2).all(|w| w[1] > w[0]), "sweep strictly increasing");
    }

    #[test]
    fn table_validation_rejects_bad_shapes() {
        let mk = |thr: [u64; 3], lat: [u64; 3], pow: [f64; 3]| {
            PowerGateTable::new(
                "test",
                (0..3)
                    .map(|i| StageSpec {
                        stage: i,
                        min_idle: thr[i],
                        latency: lat[i],
                        power_watts: pow[i],
                    })
                    .collect(),
            )
        };
        assert!(matches!(
            mk([5, 10, 20], [1, 2, 3], [3.0, 2.0, 1.0]),
            Err(Error::InvalidTable(_))
        ));
        assert!(matches!(
            mk([0, 10, 10], [1, 2, 3], [3.0, 2.0, 1.0]),
            Err(Error::InvalidTable(_))
        ));
        assert!(matches!(
            mk([0, 10, 20], [5, 2, 3], [3.0, 2.0, 1.0]),
            Err(Error::InvalidTable(_))
        ));
        assert!(matches!(
            mk([0, 10, 20], [1, 2, 3], [3.0, 2.0, 2.5]),
            Err(Error::InvalidTable(_))
        ));
        assert!(matches!(
            mk([0, 10, 20], [1, 0, 3], [3.0, 2.0, 1.0]),
            Err(Error::InvalidTable(_))
        ));
        assert!(matches!(PowerGateTable::new("e", vec![]), Err(Error::InvalidTable(_))));
    }

    #[test]
    fn config_text_round_trip() {
        let text = "\
# custom staircase
stage, min_idle, latency_cycles, power_watts
0, 0, 40, 100.0
1, 2000, 500, 99.0
2, 50000, 7000, 95.5
";
        let t = PowerGateTable::from_config_str("custom", text).unwrap();
        assert_eq!(t.stages().len(), 3);
        assert_eq!(t.stage_for_idle(1_999).latency, 40);
        assert_eq!(t.stage_for_idle(2_000).latency, 500);
        assert_eq!(t.stage_for_idle(u64::MAX).power_watts, 95.5);
    }

    #[test]
    fn config_text_diagnostics_carry_line_numbers() {
        let err = PowerGateTable::from_config_str("bad", "0, 0, 50, 145.0\n1, x, 600, 143.0\n")
            .unwrap_err();
        match err {
            Error::ConfigParse { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "min_idle");
            }
            other => panic!("expected ConfigParse, got {other:?}"),
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn every_idle_maps_to_exactly_one_stage(idle in any::<u64>()) {
                let t = PowerGateTable::default_profile();
                let s = t.stage_for_idle(idle);
                prop_assert!(idle >= s.min_idle);
                if s.stage + 1 < t.stages().len() {
                    prop_assert!(idle < t.stage(s.stage + 1).unwrap().min_idle);
                }
            }

            #[test]
            fn invoke_reserves_exactly_latency(now in 0u64..1_000_000_000) {
                let mut s = AcceleratorState::new(Arc::new(PowerGateTable::default_profile()));
                let lat = s.invoke(now).unwrap();
                prop_assert_eq!(s.last_use(), Some(now + lat));
            }

            #[test]
            fn staircase_latency_monotone_in_idle(a in any::<u64>(), b in any::<u64>()) {
                let t = PowerGateTable::default_profile();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(t.stage_for_idle(lo).latency <= t.stage_for_idle(hi).latency);
            }
        }
    }
}
