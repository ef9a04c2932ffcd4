//! Scenario files and the deterministic experiment runner.
//!
//! A scenario is a flat text file of dotted `key = value` pairs selecting one
//! experiment kind plus its parameters, a seed, a gating profile, and an
//! output target. Running a scenario executes the referenced pipeline
//! end-to-end and writes its CSV/JSON artifacts; identical (scenario, seed)
//! pairs produce byte-identical files.
//!
//! CSV contract: `.` decimal separator, LF line endings, mandatory header
//! row. Floats are printed in Rust's shortest round-trip form.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::attacker::{
    run_early_exit_attack_with, run_membership_attack, run_moe_attack, AttackReport,
    MembershipAttackConfig, MoeAttackConfig, DEFAULT_CALIBRATION_TRIALS,
};
use crate::channel::{
    analytic_bit_error, noise_resilience, transmit_message_detailed, BitTransmission,
    ChannelConfig, GapSource, MessageTransmission, DEFAULT_BASE_LATENCY, DEFAULT_ROUND_TIME,
};
use crate::error::{Error, Result};
use crate::gadgets::{EarlyExitConfig, GadgetTrace, MembershipModel, MoeConfig, TraceEvent};
use crate::magnifier::{magnify_sweep, Magnification, MagnifierAlignment};
use crate::mitigations::{leakage_under_policy, overhead_curve, MitigationPolicy};
use crate::power_gate::{characterize, geometric_sweep, AcceleratorState, PowerGateTable};
use crate::stats::SeededRng;
use crate::DEFAULT_FREQUENCY_HZ;

/// Environment variable the CLI honors as the default output directory.
pub const OUT_DIR_ENV: &str = "GATESIM_OUT_DIR";

/// Output encoding of a scenario's primary artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

/// One resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub profile: String,
    /// Optional path to a custom gating-table config; overrides `profile`.
    pub table_file: Option<String>,
    pub output: String,
    pub format: OutputFormat,
    pub kind: ScenarioKind,
}

/// The experiment a scenario runs.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// Rewarm staircase over a geometric idle sweep.
    Characterize { start_exp: u32, end_exp: u32, points_per_decade: u32 },
    /// Depth-recovery attack swept over expert-routing layer gaps.
    MoeGapSweep { attack: MoeAttackConfig, gap_min: usize, gap_max: usize, trials: usize },
    /// Early-exit recovery attack at one configuration.
    EarlyExitAttack {
        gadget: EarlyExitConfig,
        trials: usize,
        calibration_trials: usize,
        dump_observations: bool,
    },
    /// Membership inference through the early-exit channel.
    MiaAttack { attack: MembershipAttackConfig, trials: usize, dump_observations: bool },
    /// Covert message transmission.
    Covert { channel: ChannelConfig, base_low: f64, message: String, dump_samples: bool },
    /// Noise-resilience closed form plus accuracy-versus-noise sweep.
    Resilience { source: GapSource, n: usize, confidence: f64, sweep_points: usize },
    /// Magnifier delta sweep.
    MagnifySweep { align: MagnifierAlignment, delta_max: u64, step: u64 },
    /// Overhead curves for a set of policies over a switch-rate grid.
    MitigationOverheads { policies: Vec<MitigationPolicy>, rates: Vec<f64> },
    /// Early-exit attack rerun under a gating policy.
    MitigatedLeakage {
        policy: MitigationPolicy,
        gadget: EarlyExitConfig,
        trials: usize,
        calibration_trials: usize,
    },
}

// ---------------------------------------------------------------------------
// Parsing

struct KeyTable {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyTable {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: lineno,
                key: line.to_string(),
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::ConfigParse {
                    line: lineno,
                    key,
                    msg: "key and value must be non-empty".into(),
                });
            }
            if entries.insert(key.clone(), (lineno, value)).is_some() {
                return Err(Error::ConfigParse {
                    line: lineno,
                    key,
                    msg: "duplicate key".into(),
                });
            }
        }
        Ok(KeyTable { entries })
    }

    fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, value)) => value.parse().map(Some).map_err(|_| Error::ConfigParse {
                line,
                key: key.to_string(),
                msg: format!("cannot parse `{value}`"),
            }),
        }
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take(key)?.ok_or_else(|| Error::ConfigParse {
            line: 0,
            key: key.to_string(),
            msg: "required key is missing".into(),
        })
    }

    /// Error on the first (lowest-line) unconsumed key.
    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) =
            self.entries.into_iter().min_by_key(|(_, (line, _))| *line)
        {
            return Err(Error::ConfigParse { line, key, msg: "unknown key".into() });
        }
        Ok(())
    }
}

fn take_moe_config(keys: &mut KeyTable) -> Result<MoeConfig> {
    let mut cfg = MoeConfig::default();
    cfg.layers_high = keys.take_or("gadget.moe.layers_high", cfg.layers_high)?;
    cfg.layers_low = keys.take_or("gadget.moe.layers_low", cfg.layers_low)?;
    cfg.per_layer_compute = keys.take_or("gadget.moe.per_layer_compute", cfg.per_layer_compute)?;
    cfg.jitter_sigma = keys.take_or("gadget.moe.jitter_sigma", cfg.jitter_sigma)?;
    cfg.amx_calls_per_layer =
        keys.take_or("gadget.moe.amx_calls_per_layer", cfg.amx_calls_per_layer)?;
    Ok(cfg)
}

fn take_early_exit_config(keys: &mut KeyTable) -> Result<EarlyExitConfig> {
    let mut cfg = EarlyExitConfig::default();
    cfg.total_layers = keys.take_or("gadget.early_exit.total_layers", cfg.total_layers)?;
    cfg.exit_after = keys.take_or("gadget.early_exit.exit_after", cfg.exit_after)?;
    cfg.per_layer_compute =
        keys.take_or("gadget.early_exit.per_layer_compute", cfg.per_layer_compute)?;
    cfg.probe_setup_delay =
        keys.take_or("gadget.early_exit.probe_setup_delay", cfg.probe_setup_delay)?;
    Ok(cfg)
}

fn take_channel_config(keys: &mut KeyTable) -> Result<(ChannelConfig, f64)> {
    let source: GapSource = keys.take_or("channel.source", GapSource::Amx)?;
    let cfg = ChannelConfig {
        source,
        sigma: keys.take_or("channel.sigma", 30_000.0)?,
        trials_per_bit: keys.take_or("channel.trials_per_bit", 1_000)?,
        timer_resolution: keys.take_or("channel.timer_resolution", 0.0)?,
        round_time: keys.take_or("channel.round_time", DEFAULT_ROUND_TIME)?,
        frequency_hz: keys.take_or("channel.frequency_hz", DEFAULT_FREQUENCY_HZ)?,
    };
    let base = keys.take_or("channel.base", DEFAULT_BASE_LATENCY)?;
    Ok((cfg, base))
}

impl Scenario {
    /// Parse and resolve one scenario from its text form.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut keys = KeyTable::parse(text)?;
        let name: String = keys.require("name")?;
        let kind_name: String = keys.require("kind")?;
        let seed: u64 = keys.take_or("seed", 0)?;
        let profile: String = keys.take_or("profile", "default".to_string())?;
        let table_file: Option<String> = keys.take("table.file")?;
        let format: OutputFormat = keys.take_or(
            "format",
            if kind_name == "covert" || kind_name.contains("leakage") {
                OutputFormat::Json
            } else {
                OutputFormat::Csv
            },
        )?;
        let default_output = format!(
            "{name}.{}",
            match format {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
            }
        );
        let output: String = keys.take_or("output", default_output)?;

        let kind = match kind_name.as_str() {
            "characterize" => ScenarioKind::Characterize {
                start_exp: keys.take_or("sweep.start_exp", 2)?,
                end_exp: keys.take_or("sweep.end_exp", 9)?,
                points_per_decade: keys.take_or("sweep.points_per_decade", 8)?,
            },
            "moe_gap_sweep" => {
                let gadget = take_moe_config(&mut keys)?;
                let attack = MoeAttackConfig {
                    gadget,
                    probe_lead: keys.take_or(
                        "attack.probe_lead",
                        MoeAttackConfig::default().probe_lead,
                    )?,
                    probe_setup_delay: keys.take_or(
                        "attack.probe_setup_delay",
                        MoeAttackConfig::default().probe_setup_delay,
                    )?,
                    calibration_trials: keys
                        .take_or("attack.calibration_trials", DEFAULT_CALIBRATION_TRIALS)?,
                };
                ScenarioKind::MoeGapSweep {
                    attack,
                    gap_min: keys.take_or("sweep.gap_min", 2)?,
                    gap_max: keys.take_or("sweep.gap_max", 14)?,
                    trials: keys.take_or("trials", 10_000)?,
                }
            }
            "early_exit_attack" => ScenarioKind::EarlyExitAttack {
                gadget: take_early_exit_config(&mut keys)?,
                trials: keys.take_or("trials", 20_000)?,
                calibration_trials: keys
                    .take_or("attack.calibration_trials", DEFAULT_CALIBRATION_TRIALS)?,
                dump_observations: keys.take_or("attack.dump_observations", false)?,
            },
            "mia_attack" => {
                let gadget = take_early_exit_config(&mut keys)?;
                let model = MembershipModel {
                    p_exit_member: keys
                        .take_or("mia.p_exit_member", MembershipModel::default().p_exit_member)?,
                    p_exit_nonmember: keys.take_or(
                        "mia.p_exit_nonmember",
                        MembershipModel::default().p_exit_nonmember,
                    )?,
                };
                ScenarioKind::MiaAttack {
                    attack: MembershipAttackConfig {
                        model,
                        gadget,
                        member_prior: keys.take_or("mia.member_prior", 0.5)?,
                        calibration_trials: keys
                            .take_or("attack.calibration_trials", DEFAULT_CALIBRATION_TRIALS)?,
                    },
                    trials: keys.take_or("trials", 10_000)?,
                    dump_observations: keys.take_or("attack.dump_observations", false)?,
                }
            }
            "covert" => {
                let (channel, base_low) = take_channel_config(&mut keys)?;
                ScenarioKind::Covert {
                    channel,
                    base_low,
                    message: keys.require("covert.message")?,
                    dump_samples: keys.take_or("covert.dump_samples", false)?,
                }
            }
            "resilience" => ScenarioKind::Resilience {
                source: keys.take_or("channel.source", GapSource::Amx)?,
                n: keys.take_or("resilience.n", 500)?,
                confidence: keys.take_or("resilience.confidence", 0.99)?,
                sweep_points: keys.take_or("resilience.sweep_points", 21)?,
            },
            "magnify" => {
                let align = MagnifierAlignment::new(
                    keys.take_or("magnify.boundary_stage", 3)?,
                    keys.take_or("magnify.epsilon", 100)?,
                );
                ScenarioKind::MagnifySweep {
                    align,
                    delta_max: keys.take_or("magnify.delta_max", 2 * align.epsilon)?,
                    step: keys.take_or("magnify.step", 1)?,
                }
            }
            "mitigation_overheads" => {
                let policies = match keys.take_raw("mitigate.policies") {
                    None => vec![
                        MitigationPolicy::FixedStage(0),
                        MitigationPolicy::FixedStage(1),
                        MitigationPolicy::FixedStage(2),
                        MitigationPolicy::FixedStage(3),
                        MitigationPolicy::FixedStage(4),
                        MitigationPolicy::ResetOnSwitch,
                    ],
                    Some((line, value)) => value
                        .split(',')
                        .map(|p| {
                            p.trim().parse().map_err(|_| Error::ConfigParse {
                                line,
                                key: "mitigate.policies".into(),
                                msg: format!("cannot parse policy `{}`", p.trim()),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                };
                let rates = match keys.take_raw("mitigate.rates") {
                    None => (0..=20).map(|k| k as f64 * 50.0).collect(),
                    Some((line, value)) => value
                        .split(',')
                        .map(|r| {
                            r.trim().parse().map_err(|_| Error::ConfigParse {
                                line,
                                key: "mitigate.rates".into(),
                                msg: format!("cannot parse rate `{}`", r.trim()),
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?,
                };
                ScenarioKind::MitigationOverheads { policies, rates }
            }
            "mitigated_leakage" => ScenarioKind::MitigatedLeakage {
                policy: keys.require("mitigate.policy")?,
                gadget: take_early_exit_config(&mut keys)?,
                trials: keys.take_or("trials", 2_000)?,
                calibration_trials: keys
                    .take_or("attack.calibration_trials", DEFAULT_CALIBRATION_TRIALS)?,
            },
            other => {
                return Err(Error::InvalidConfig(format!("unknown scenario kind `{other}`")))
            }
        };
        keys.finish()?;
        Ok(Scenario { name, seed, profile, table_file, output, format, kind })
    }
}

// ---------------------------------------------------------------------------
// Bundled scenarios

/// A scenario shipped with the library.
#[derive(Debug, Clone, Copy)]
pub struct BundledScenario {
    pub name: &'static str,
    pub text: &'static str,
}

/// The scenarios bundled with the library, by name.
pub fn bundled_scenarios() -> &'static [BundledScenario] {
    &[
        BundledScenario {
            name: "characterize_default",
            text: include_str!("../scenarios/characterize_default.scn"),
        },
        BundledScenario {
            name: "moe_gap_sweep",
            text: include_str!("../scenarios/moe_gap_sweep.scn"),
        },
        BundledScenario {
            name: "covert_I_onehop",
            text: include_str!("../scenarios/covert_I_onehop.scn"),
        },
    ]
}

/// Look up a bundled scenario by name.
pub fn bundled_scenario(name: &str) -> Result<Scenario> {
    bundled_scenarios()
        .iter()
        .find(|b| b.name == name)
        .map(|b| Scenario::from_config_str(b.text))
        .transpose()?
        .ok_or_else(|| Error::InvalidConfig(format!("no bundled scenario named `{name}`")))
}

// ---------------------------------------------------------------------------
// Export helpers (CSV/JSON schemas declared per module)

fn csv_document(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut doc = String::from(header);
    doc.push('\n');
    for row in rows {
        doc.push_str(&row);
        doc.push('\n');
    }
    doc
}

/// Staircase CSV: `delay_cycles,latency_cycles`.
pub fn characterize_csv(rows: &[(u64, u64)]) -> String {
    csv_document(
        "delay_cycles,latency_cycles",
        rows.iter().map(|(d, l)| format!("{d},{l}")),
    )
}

/// Trace CSV: `index,kind,duration_cycles` (invokes have no fixed duration
/// until executed; they export duration 0 with kind `invoke`).
pub fn trace_csv(trace: &GadgetTrace) -> String {
    csv_document(
        "index,kind,duration_cycles",
        trace.events().iter().enumerate().map(|(i, e)| match e {
            TraceEvent::Compute(c) => format!("{i},compute,{c}"),
            TraceEvent::AccelInvoke => format!("{i},invoke,0"),
        }),
    )
}

/// Scored observations CSV: `value_cycles,truth,predicted`.
pub fn observations_csv(report: &AttackReport) -> String {
    csv_document(
        "value_cycles,truth,predicted",
        report
            .observations
            .iter()
            .zip(&report.predictions)
            .map(|(o, &p)| format!("{},{},{}", o.value, u8::from(o.truth), u8::from(p))),
    )
}

/// Gap-sweep CSV: `gap,accuracy,tpr,fpr,auc`.
pub fn gap_sweep_csv(rows: &[(usize, AttackReport)]) -> String {
    csv_document(
        "gap,accuracy,tpr,fpr,auc",
        rows.iter().map(|(gap, r)| {
            format!("{gap},{},{},{},{}", r.accuracy, r.metrics.tpr(), r.metrics.fpr(), r.auc)
        }),
    )
}

/// Per-bit sample histogram CSV: `bit_index,sample_cycles`.
pub fn bit_samples_csv(transmissions: &[BitTransmission]) -> String {
    csv_document(
        "bit_index,sample_cycles",
        transmissions.iter().enumerate().flat_map(|(i, tx)| {
            tx.samples.iter().map(move |s| format!("{i},{s}")).collect::<Vec<_>>()
        }),
    )
}

/// Resilience sweep CSV: `sigma_cycles,accuracy`.
pub fn resilience_sweep_csv(rows: &[(f64, f64)]) -> String {
    csv_document("sigma_cycles,accuracy", rows.iter().map(|(s, a)| format!("{s},{a}")))
}

/// Magnifier sweep CSV: `delta_cycles,observed_latency,amplified_gap`.
pub fn magnify_csv(rows: &[Magnification]) -> String {
    csv_document(
        "delta_cycles,observed_latency,amplified_gap",
        rows.iter().map(|m| format!("{},{},{}", m.delta, m.observed_latency, m.amplified_gap)),
    )
}

/// Overheads CSV: `policy,switch_rate,power_pct,perf_pct`.
pub fn overheads_csv(rows: &[(MitigationPolicy, f64, f64, f64)]) -> String {
    csv_document(
        "policy,switch_rate,power_pct,perf_pct",
        rows.iter().map(|(p, r, pw, pf)| format!("{p},{r},{pw},{pf}")),
    )
}

/// Message summary JSON with exactly the declared keys:
/// `{message, decoded, ber, bits, trials_per_bit}`.
pub fn message_summary_json(msg: &MessageTransmission) -> String {
    let value = serde_json::json!({
        "message": msg.message,
        "decoded": msg.decoded,
        "ber": msg.ber,
        "bits": msg.bits,
        "trials_per_bit": msg.trials_per_bit,
    });
    to_pretty_json(&value)
}

/// Attack metrics JSON mirroring the ConfusionMetrics fields plus the
/// derived rates and ROC area.
pub fn attack_report_json(report: &AttackReport) -> String {
    let m = &report.metrics;
    let value = serde_json::json!({
        "trials": report.trials,
        "threshold": report.threshold,
        "inverted": report.inverted,
        "degenerate": report.degenerate,
        "metrics": {
            "true_positives": m.true_positives,
            "false_positives": m.false_positives,
            "true_negatives": m.true_negatives,
            "false_negatives": m.false_negatives,
            "accuracy": m.accuracy(),
            "tpr": m.tpr(),
            "fpr": m.fpr(),
            "tnr": m.tnr(),
            "precision": m.precision(),
        },
        "auc": report.auc,
    });
    to_pretty_json(&value)
}

fn to_pretty_json(value: &impl Serialize) -> String {
    let mut doc = serde_json::to_string_pretty(value).expect("report types serialize");
    doc.push('\n');
    doc
}

// ---------------------------------------------------------------------------
// Runner

fn write_artifact(out_dir: &Path, rel: &str, content: &str) -> Result<PathBuf> {
    let path = out_dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, content)?;
    Ok(path)
}

fn sibling_with_suffix(rel: &str, suffix: &str, ext: &str) -> String {
    let stem = rel.rsplit_once('.').map(|(s, _)| s).unwrap_or(rel);
    format!("{stem}{suffix}.{ext}")
}

/// Execute a scenario and write its artifacts under `out_dir`. Returns the
/// paths written, primary artifact first.
pub fn run_scenario(sc: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let table = Arc::new(match &sc.table_file {
        Some(path) => {
            PowerGateTable::from_config_str("custom", &std::fs::read_to_string(path)?)?
        }
        None => PowerGateTable::builtin(&sc.profile)?,
    });
    let mut files = Vec::new();
    match &sc.kind {
        ScenarioKind::Characterize { start_exp, end_exp, points_per_decade } => {
            if end_exp < start_exp {
                return Err(Error::InvalidConfig("sweep.end_exp below sweep.start_exp".into()));
            }
            let rows = characterize(&table, &geometric_sweep(*start_exp, *end_exp, *points_per_decade));
            let content = match sc.format {
                OutputFormat::Csv => characterize_csv(&rows),
                OutputFormat::Json => to_pretty_json(&rows),
            };
            files.push(write_artifact(out_dir, &sc.output, &content)?);
        }
        ScenarioKind::MoeGapSweep { attack, gap_min, gap_max, trials } => {
            if gap_min > gap_max {
                return Err(Error::InvalidConfig("sweep.gap_min above sweep.gap_max".into()));
            }
            let mut rows = Vec::new();
            for gap in *gap_min..=*gap_max {
                if gap == 0 || gap >= attack.gadget.layers_high {
                    return Err(Error::InvalidConfig(format!(
                        "gap {gap} must be in 1..{}",
                        attack.gadget.layers_high
                    )));
                }
                let mut cfg = attack.clone();
                cfg.gadget.layers_low = cfg.gadget.layers_high - gap;
                let report = run_moe_attack(&table, &cfg, *trials, sc.seed)?;
                rows.push((gap, report));
            }
            let content = match sc.format {
                OutputFormat::Csv => gap_sweep_csv(&rows),
                OutputFormat::Json => {
                    let reports: Vec<_> = rows
                        .iter()
                        .map(|(gap, r)| {
                            serde_json::json!({
                                "gap": gap,
                                "accuracy": r.accuracy,
                                "tpr": r.metrics.tpr(),
                                "fpr": r.metrics.fpr(),
                                "auc": r.auc,
                            })
                        })
                        .collect();
                    to_pretty_json(&reports)
                }
            };
            files.push(write_artifact(out_dir, &sc.output, &content)?);
        }
        ScenarioKind::EarlyExitAttack { gadget, trials, calibration_trials, dump_observations } => {
            let report = run_early_exit_attack_with(
                || AcceleratorState::new(Arc::clone(&table)),
                gadget,
                *trials,
                *calibration_trials,
                sc.seed,
            )?;
            let content = match sc.format {
                OutputFormat::Json => attack_report_json(&report),
                OutputFormat::Csv => observations_csv(&report),
            };
            files.push(write_artifact(out_dir, &sc.output, &content)?);
            if *dump_observations && sc.format == OutputFormat::Json {
                let rel = sibling_with_suffix(&sc.output, "_observations", "csv");
                files.push(write_artifact(out_dir, &rel, &observations_csv(&report))?);
            }
        }
        ScenarioKind::MiaAttack { attack, trials, dump_observations } => {
            let out = run_membership_attack(&table, attack, *trials, sc.seed)?;
            let content = match sc.format {
                OutputFormat::Json => attack_report_json(&out.report),
                OutputFormat::Csv => observations_csv(&out.report),
            };
            files.push(write_artifact(out_dir, &sc.output, &content)?);
            if *dump_observations && sc.format == OutputFormat::Json {
                let rel = sibling_with_suffix(&sc.output, "_observations", "csv");
                files.push(write_artifact(out_dir, &rel, &observations_csv(&out.report))?);
            }
        }
        ScenarioKind::Covert { channel, base_low, message, dump_samples } => {
            let mut rng = SeededRng::new(sc.seed);
            let (summary, transmissions) =
                transmit_message_detailed(message.as_bytes(), *base_low, channel, &mut rng)?;
            let content = match sc.format {
                OutputFormat::Json => message_summary_json(&summary),
                OutputFormat::Csv => bit_samples_csv(&transmissions),
            };
            files.push(write_artifact(out_dir, &sc.output, &content)?);
            if *dump_samples && sc.format == OutputFormat::Json {
                let rel = sibling_with_suffix(&sc.output, "_samples", "csv");
                files.push(write_artifact(out_dir, &rel, &bit_samples_csv(&transmissions))?);
            }
        }
        ScenarioKind::Resilience { source, n, confidence, sweep_points } => {
            let sigma_max = noise_resilience(*source, *n, *confidence)?;
            match sc.format {
                OutputFormat::Json => {
                    let value = serde_json::json!({
                        "source": source.to_string(),
                        "n": n,
                        "confidence": confidence,
                        "sigma_max_cycles": sigma_max,
                    });
                    files.push(write_artifact(out_dir, &sc.output, &to_pretty_json(&value))?);
                }
                OutputFormat::Csv => {
                    let points = (*sweep_points).max(2);
                    let rows: Vec<(f64, f64)> = (0..points)
                        .map(|k| {
                            let sigma = 2.0 * sigma_max * k as f64 / (points - 1) as f64;
                            let accuracy = if sigma == 0.0 {
                                1.0
                            } else {
                                1.0 - analytic_bit_error(source.gap_cycles(), sigma, *n)
                                    .expect("validated source and n")
                            };
                            (sigma, accuracy)
                        })
                        .collect();
                    files.push(write_artifact(
                        out_dir,
                        &sc.output,
                        &resilience_sweep_csv(&rows),
                    )?);
                }
            }
        }
        ScenarioKind::MagnifySweep { align, delta_max, step } => {
            if *step == 0 {
                return Err(Error::InvalidConfig("magnify.step must be positive".into()));
            }
            let rows = magnify_sweep((0..=*delta_max).step_by(*step as usize), *align, &table)?;
            let content = match sc.format {
                OutputFormat::Csv => magnify_csv(&rows),
                OutputFormat::Json => to_pretty_json(&rows),
            };
            files.push(write_artifact(out_dir, &sc.output, &content)?);
        }
        ScenarioKind::MitigationOverheads { policies, rates } => {
            let mut rows = Vec::new();
            for policy in policies {
                let curve = overhead_curve(policy, rates.iter().copied())?;
                for (rate, power, perf) in curve.points {
                    rows.push((*policy, rate, power, perf));
                }
            }
            let content = match sc.format {
                OutputFormat::Csv => overheads_csv(&rows),
                OutputFormat::Json => {
                    let values: Vec<_> = rows
                        .iter()
                        .map(|(p, r, pw, pf)| {
                            serde_json::json!({
                                "policy": p.to_string(),
                                "switch_rate": r,
                                "power_pct": pw,
                                "perf_pct": pf,
                            })
                        })
                        .collect();
                    to_pretty_json(&values)
                }
            };
            files.push(write_artifact(out_dir, &sc.output, &content)?);
        }
        ScenarioKind::MitigatedLeakage { policy, gadget, trials, calibration_trials } => {
            let report =
                leakage_under_policy(&table, policy, gadget, *trials, *calibration_trials, sc.seed)?;
            let content = match sc.format {
                OutputFormat::Json => attack_report_json(&report),
                OutputFormat::Csv => observations_csv(&report),
            };
            files.push(write_artifact(out_dir, &sc.output, &content)?);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().expect("create temp dir")
    }

    #[test]
    fn parse_bundled_scenarios() {
        for bundled in bundled_scenarios() {
            let sc = Scenario::from_config_str(bundled.text)
                .unwrap_or_else(|e| panic!("{}: {e}", bundled.name));
            assert_eq!(sc.name, bundled.name);
        }
        assert!(bundled_scenario("covert_I_onehop").is_ok());
        assert!(bundled_scenario("nope").is_err());
    }

    #[test]
    fn characterize_scenario_runs_and_matches_table() {
        let sc = bundled_scenario("characterize_default").unwrap();
        let dir = tmp();
        let files = run_scenario(&sc, dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        let content = std::fs::read_to_string(&files[0]).unwrap();
        let mut lines = content.lines();
        assert_eq!(lines.next(), Some("delay_cycles,latency_cycles"));
        let rows: Vec<(u64, u64)> = lines
            .map(|l| {
                let (d, lat) = l.split_once(',').unwrap();
                (d.parse().unwrap(), lat.parse().unwrap())
            })
            .collect();
        assert_eq!(rows.first().unwrap().1, 50);
        assert_eq!(rows.last().unwrap().1, 20_000);
        assert!(rows.iter().any(|&(d, l)| d == 1_000 && l == 600));
        assert!(rows.iter().any(|&(d, l)| d == 10_000 && l == 6_000));
        assert!(rows.iter().any(|&(d, l)| d == 100_000 && l == 9_000));
        assert!(rows.iter().any(|&(d, l)| d == 10_000_000 && l == 20_000));
    }

    #[test]
    fn covert_scenario_decodes_and_is_byte_identical() {
        let sc = bundled_scenario("covert_I_onehop").unwrap();
        let dir_a = tmp();
        let dir_b = tmp();
        let a = run_scenario(&sc, dir_a.path()).unwrap();
        let b = run_scenario(&sc, dir_b.path()).unwrap();
        let content_a = std::fs::read_to_string(&a[0]).unwrap();
        let content_b = std::fs::read_to_string(&b[0]).unwrap();
        assert_eq!(content_a, content_b, "same scenario+seed must be byte-identical");
        let parsed: serde_json::Value = serde_json::from_str(&content_a).unwrap();
        assert_eq!(parsed["decoded"], "I");
        assert_eq!(parsed["ber"], 0.0);
        assert_eq!(parsed["bits"], 8);
        assert_eq!(parsed["trials_per_bit"], 1_000);
        let keys: Vec<&String> = parsed.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 5, "summary carries exactly the declared keys");
    }

    #[test]
    fn covert_scenario_sample_dump() {
        let mut sc = bundled_scenario("covert_I_onehop").unwrap();
        if let ScenarioKind::Covert { dump_samples, channel, .. } = &mut sc.kind {
            *dump_samples = true;
            channel.trials_per_bit = 3;
        }
        let dir = tmp();
        let files = run_scenario(&sc, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let samples = std::fs::read_to_string(&files[1]).unwrap();
        let mut lines = samples.lines();
        assert_eq!(lines.next(), Some("bit_index,sample_cycles"));
        assert_eq!(lines.count(), 8 * 3, "8 bits x 3 samples");
    }

    #[test]
    fn parse_rejects_unknown_and_malformed_keys() {
        let text = "name = x\nkind = characterize\nsweep.start_exp = 2\nbogus.key = 1\n";
        match Scenario::from_config_str(text) {
            Err(Error::ConfigParse { line, key, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(key, "bogus.key");
            }
            other => panic!("expected unknown-key diagnostic, got {other:?}"),
        }
        match Scenario::from_config_str("name = x\nkind = covert\nchannel.sigma = abc\ncovert.message = I\n") {
            Err(Error::ConfigParse { line, key, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "channel.sigma");
            }
            other => panic!("expected value diagnostic, got {other:?}"),
        }
        assert!(matches!(
            Scenario::from_config_str("name = x\nkind = warp\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            Scenario::from_config_str("kind = characterize\n"),
            Err(Error::ConfigParse { .. })
        ));
        assert!(matches!(
            Scenario::from_config_str("name = x\nname = y\nkind = characterize\n"),
            Err(Error::ConfigParse { line: 2, .. })
        ));
    }

    #[test]
    fn magnify_scenario_step_function() {
        let sc = Scenario::from_config_str(
            "name = mag\nkind = magnify\nseed = 0\noutput = mag.csv\nformat = csv\n",
        )
        .unwrap();
        let dir = tmp();
        let files = run_scenario(&sc, dir.path()).unwrap();
        let content = std::fs::read_to_string(&files[0]).unwrap();
        let mut lines = content.lines();
        assert_eq!(lines.next(), Some("delta_cycles,observed_latency,amplified_gap"));
        for line in lines {
            let cols: Vec<u64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            let expected = if cols[0] >= 100 { 11_000 } else { 0 };
            assert_eq!(cols[2], expected, "delta {}", cols[0]);
        }
    }

    #[test]
    fn overheads_scenario_covers_policies() {
        let sc = Scenario::from_config_str(
            "name = ov\nkind = mitigation_overheads\nmitigate.rates = 0,150,1000\noutput = ov.csv\n",
        )
        .unwrap();
        let dir = tmp();
        let files = run_scenario(&sc, dir.path()).unwrap();
        let content = std::fs::read_to_string(&files[0]).unwrap();
        assert!(content.starts_with("policy,switch_rate,power_pct,perf_pct\n"));
        assert!(content.contains("fixed:0,0,12,0"));
        assert!(content.contains("reset,1000,11.6,30"));
        assert!(content.contains("reset,150,4.6"));
    }

    #[test]
    fn resilience_scenario_json_and_sweep() {
        let sc = Scenario::from_config_str(
            "name = res\nkind = resilience\nchannel.source = avx512\nformat = json\noutput = res.json\n",
        )
        .unwrap();
        let dir = tmp();
        let files = run_scenario(&sc, dir.path()).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
        let sigma_max = parsed["sigma_max_cycles"].as_f64().unwrap();
        assert!((sigma_max - 720.894).abs() < 0.01);

        let sweep = Scenario::from_config_str(
            "name = res2\nkind = resilience\nresilience.sweep_points = 5\nformat = csv\noutput = res2.csv\n",
        )
        .unwrap();
        let files = run_scenario(&sweep, dir.path()).unwrap();
        let content = std::fs::read_to_string(&files[0]).unwrap();
        let mut lines = content.lines();
        assert_eq!(lines.next(), Some("sigma_cycles,accuracy"));
        let rows: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0], 1.0, "zero noise is error-free");
        assert!(rows.windows(2).all(|w| w[1] <= w[0]), "accuracy non-increasing in sigma");
    }

    #[test]
    fn early_exit_scenario_json_metrics() {
        let sc = Scenario::from_config_str(
            "name = ee\nkind = early_exit_attack\ntrials = 300\nattack.calibration_trials = 40\nformat = json\noutput = ee.json\nseed = 4\n",
        )
        .unwrap();
        let dir = tmp();
        let files = run_scenario(&sc, dir.path()).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(parsed["metrics"]["accuracy"], 1.0);
        assert_eq!(parsed["auc"], 1.0);
        assert_eq!(parsed["trials"], 300);
    }

    #[test]
    fn observations_csv_schema() {
        let sc = Scenario::from_config_str(
            "name = eec\nkind = early_exit_attack\ntrials = 10\nattack.calibration_trials = 5\nformat = csv\noutput = eec.csv\nseed = 4\n",
        )
        .unwrap();
        let dir = tmp();
        let files = run_scenario(&sc, dir.path()).unwrap();
        let content = std::fs::read_to_string(&files[0]).unwrap();
        let mut lines = content.lines();
        assert_eq!(lines.next(), Some("value_cycles,truth,predicted"));
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 3);
            assert_eq!(cols[1], cols[2], "early-exit predictions are exact");
        }
    }

    #[test]
    fn trace_csv_schema() {
        let cfg = crate::gadgets::EarlyExitConfig::default();
        let trace = crate::gadgets::early_exit_trace(&cfg, true).unwrap();
        let doc = trace_csv(&trace);
        let mut lines = doc.lines();
        assert_eq!(lines.next(), Some("index,kind,duration_cycles"));
        assert_eq!(lines.next(), Some("0,compute,12000"));
        assert_eq!(lines.next(), Some("1,invoke,0"));
        assert_eq!(doc.lines().last(), Some("4,compute,48000"), "padding row last");
    }

    #[test]
    fn mitigated_leakage_scenario() {
        let sc = Scenario::from_config_str(
            "name = ml\nkind = mitigated_leakage\nmitigate.policy = fixed:0\ntrials = 200\nattack.calibration_trials = 20\noutput = ml.json\nseed = 6\n",
        )
        .unwrap();
        assert_eq!(sc.format, OutputFormat::Json, "leakage defaults to JSON");
        let dir = tmp();
        let files = run_scenario(&sc, dir.path()).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(parsed["degenerate"], true);
        assert_eq!(parsed["auc"], 0.5);
    }
}
