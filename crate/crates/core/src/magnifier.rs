//! Single-invocation latency magnifier.
//!
//! Schedules an accelerator invocation `epsilon` cycles below a stage
//! threshold. A victim snippet inserted before the invocation adds `delta`
//! idle cycles; any `delta >= epsilon` tips the unit across the boundary, so
//! the probe pays the next stage's rewarm instead. A sub-timer-resolution
//! delta is thereby converted into a full stage-latency gap.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_gate::{AcceleratorState, PowerGateTable};

/// Default distance below the boundary threshold, cycles.
pub const DEFAULT_EPSILON: u64 = 100;

/// Placement of the magnifying probe relative to a stage boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MagnifierAlignment {
    /// Gap is measured between `boundary_stage` and `boundary_stage + 1`.
    pub boundary_stage: usize,
    /// Cycles below the `boundary_stage + 1` threshold at which the probe is
    /// scheduled.
    pub epsilon: u64,
}

impl Default for MagnifierAlignment {
    fn default() -> Self {
        // Deepest boundary of the default table (stage 3 -> 4).
        MagnifierAlignment { boundary_stage: 3, epsilon: DEFAULT_EPSILON }
    }
}

impl MagnifierAlignment {
    pub fn new(boundary_stage: usize, epsilon: u64) -> Self {
        MagnifierAlignment { boundary_stage, epsilon }
    }

    /// Check the alignment against a table: the boundary must have a next
    /// stage, and epsilon must fit strictly inside the boundary's span.
    pub fn validate(&self, table: &PowerGateTable) -> Result<()> {
        let s = self.boundary_stage;
        if s + 1 >= table.stages().len() {
            return Err(Error::InvalidAlignment(format!(
                "boundary stage {s} has no next stage in a {}-stage table",
                table.stages().len()
            )));
        }
        let span = table.stage(s + 1)?.min_idle - table.stage(s)?.min_idle;
        if self.epsilon == 0 || self.epsilon >= span {
            return Err(Error::InvalidAlignment(format!(
                "epsilon {} must lie strictly inside the stage-{s} span of {span} cycles",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One magnification measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Magnification {
    /// Victim-inserted delay, cycles.
    pub delta: u64,
    /// Latency of the probing invocation.
    pub observed_latency: u64,
    /// `observed_latency` minus the boundary stage's latency; zero when the
    /// delta failed to tip the boundary.
    pub amplified_gap: u64,
}

/// Magnify a victim delay: warm the unit, idle to `epsilon` cycles below the
/// `s -> s+1` threshold, insert `delta` extra idle cycles, and time one
/// invocation. Deterministic.
pub fn magnify(
    delta: u64,
    align: MagnifierAlignment,
    table: &Arc<PowerGateTable>,
) -> Result<Magnification> {
    align.validate(table)?;
    let mut unit = AcceleratorState::new(Arc::clone(table));
    let warm = unit.invoke(0)?;
    let threshold_next = table.stage(align.boundary_stage + 1)?.min_idle;
    let probe_at = warm + threshold_next - align.epsilon + delta;
    let observed_latency = unit.invoke(probe_at)?;
    let base_latency = table.stage(align.boundary_stage)?.latency;
    Ok(Magnification {
        delta,
        observed_latency,
        amplified_gap: observed_latency.saturating_sub(base_latency),
    })
}

/// Magnify a range of deltas; rows `(delta, observed_latency, amplified_gap)`.
pub fn magnify_sweep(
    deltas: impl IntoIterator<Item = u64>,
    align: MagnifierAlignment,
    table: &Arc<PowerGateTable>,
) -> Result<Vec<Magnification>> {
    deltas.into_iter().map(|d| magnify(d, align, table)).collect()
}

/// Whether a latency gap spans at least one quantum of a coarsened timer.
pub fn detectability_at_resolution(gap: u64, resolution: f64, frequency_hz: f64) -> bool {
    gap as f64 >= resolution * frequency_hz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacker::Threshold;

    fn table() -> Arc<PowerGateTable> {
        Arc::new(PowerGateTable::default_profile())
    }

    #[test]
    fn default_boundary_magnifies_200_to_11000() {
        let m = magnify(200, MagnifierAlignment::default(), &table()).unwrap();
        assert_eq!(m.observed_latency, 20_000);
        assert_eq!(m.amplified_gap, 11_000);
    }

    #[test]
    fn zero_delta_stays_in_boundary_stage() {
        let m = magnify(0, MagnifierAlignment::default(), &table()).unwrap();
        assert_eq!(m.observed_latency, 9_000);
        assert_eq!(m.amplified_gap, 0);
    }

    #[test]
    fn shallow_boundary_gap() {
        let align = MagnifierAlignment::new(1, 100);
        for delta in [100u64, 150, 5_000] {
            let m = magnify(delta, align, &table()).unwrap();
            assert_eq!(m.amplified_gap, 6_000 - 600, "delta {delta}");
        }
        assert_eq!(magnify(99, align, &table()).unwrap().amplified_gap, 0);
    }

    #[test]
    fn step_response_jumps_exactly_at_epsilon() {
        let align = MagnifierAlignment::default();
        let t = table();
        for delta in 0..=200u64 {
            let m = magnify(delta, align, &t).unwrap();
            let expected = if delta >= align.epsilon { 11_000 } else { 0 };
            assert_eq!(m.amplified_gap, expected, "delta {delta}");
        }
    }

    #[test]
    fn gaps_are_adjacent_latency_differences_or_zero() {
        let t = table();
        for s in 0..4usize {
            let align = MagnifierAlignment::new(s, 50);
            let lat_s = t.stage(s).unwrap().latency;
            let lat_next = t.stage(s + 1).unwrap().latency;
            for delta in [0u64, 49, 50, 51, 120] {
                let gap = magnify(delta, align, &t).unwrap().amplified_gap;
                assert!(
                    gap == 0 || gap == lat_next - lat_s,
                    "stage {s} delta {delta} gap {gap}"
                );
            }
        }
    }

    #[test]
    fn composition_with_classifier_detects_delta() {
        let align = MagnifierAlignment::default();
        let t = table();
        let tau = Threshold::at((9_000.0 + 20_000.0) / 2.0);
        for delta in (0..=300u64).step_by(10) {
            let m = magnify(delta, align, &t).unwrap();
            assert_eq!(
                tau.classify(m.observed_latency as f64),
                delta >= align.epsilon,
                "delta {delta}"
            );
        }
    }

    #[test]
    fn detectability_boundary_rule() {
        assert!(detectability_at_resolution(11_000, 5e-6, 2.0e9));
        assert!(!detectability_at_resolution(200, 5e-6, 2.0e9));
        assert!(detectability_at_resolution(10_000, 5e-6, 2.0e9), "exact quantum counts");
    }

    #[test]
    fn alignment_validation() {
        let t = table();
        assert!(MagnifierAlignment::new(4, 100).validate(&t).is_err(), "no next stage");
        assert!(MagnifierAlignment::new(0, 0).validate(&t).is_err(), "epsilon 0");
        assert!(
            MagnifierAlignment::new(0, 1_000).validate(&t).is_err(),
            "epsilon spans the whole stage"
        );
        assert!(MagnifierAlignment::new(0, 999).validate(&t).is_ok());
        assert!(matches!(
            magnify(0, MagnifierAlignment::new(9, 10), &t),
            Err(Error::InvalidAlignment(_))
        ));
    }

    #[test]
    fn sweep_rows_cover_requested_deltas() {
        let rows = magnify_sweep(0..5, MagnifierAlignment::default(), &table()).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().enumerate().all(|(i, m)| m.delta == i as u64));
    }
}
