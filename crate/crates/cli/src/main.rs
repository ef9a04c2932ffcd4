//! `gatesim` — deterministic simulator of accelerator power-gating timing
//! channels.
//!
//! Every subcommand assembles a scenario, runs it through the library's
//! deterministic runner, writes the declared CSV/JSON artifacts into the
//! output directory, and prints the paths plus headline numbers. Exit codes:
//! 0 success, 1 runtime failure (invalid config values, I/O), 2 usage error
//! (unknown flag/subcommand, bad flag value, missing scenario file).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gatesim::attacker::{MembershipAttackConfig, MoeAttackConfig, DEFAULT_CALIBRATION_TRIALS};
use gatesim::channel::{GapSource, LOCALHOST_SIGMA, ONE_HOP_SIGMA};
use gatesim::gadgets::{EarlyExitConfig, MembershipModel, MoeConfig};
use gatesim::magnifier::MagnifierAlignment;
use gatesim::mitigations::{overhead, MitigationPolicy};
use gatesim::power_gate::{characterize, geometric_sweep, PowerGateTable};
use gatesim::scenario::{
    bundled_scenario, run_scenario, OutputFormat, Scenario, ScenarioKind, OUT_DIR_ENV,
};

/// Deterministic simulator of accelerator power-gating timing channels.
///
/// Models an idle-stage state machine with a rewarm-latency staircase,
/// victim gadgets whose accelerator usage depends on a secret, an attacker
/// measure/classify pipeline, a remote covert channel under Gaussian noise
/// and timer coarsening, a latency magnifier, and mitigation policies with
/// power/performance trade-offs. Identical seeds give byte-identical output.
#[derive(Parser)]
#[command(name = "gatesim", version, max_term_width = 100)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Root RNG seed; the same seed reproduces byte-identical artifacts
    /// (scenario files carry their own seed unless this flag is given).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Power-gating profile for the accelerator table.
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,

    /// Directory for output artifacts (default: $GATESIM_OUT_DIR, else `.`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Artifact encoding; each subcommand has a sensible default.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

impl GlobalArgs {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn profile(&self) -> &'static str {
        match self.profile.unwrap_or(ProfileArg::Default) {
            ProfileArg::Default => "default",
            ProfileArg::C1e => "c1e",
            ProfileArg::Measured => "measured",
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn format(&self, default: OutputFormat) -> OutputFormat {
        match self.format {
            Some(FormatArg::Csv) => OutputFormat::Csv,
            Some(FormatArg::Json) => OutputFormat::Json,
            None => default,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    /// Five-stage table with thresholds 10^3..10^7 cycles.
    Default,
    /// Same thresholds with C1E-state latencies (max rewarm 9000).
    C1e,
    /// Default latencies with measured package-power endpoints.
    Measured,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Measure the rewarm-latency staircase over a geometric idle sweep.
    Characterize(CharacterizeArgs),
    /// Run a recovery attack against a victim gadget.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Transmit a covert message across the power-gating channel.
    Covert(CovertArgs),
    /// Noise resilience of a gap source: max tolerable Gaussian sigma.
    Resilience(ResilienceArgs),
    /// Amplify a small victim delay across a sleep-stage boundary.
    Magnify(MagnifyArgs),
    /// Mitigation overhead query/sweep and residual leakage.
    Mitigate(MitigateArgs),
    /// Run a scenario file (use `bundled:NAME` for a built-in scenario).
    Run(RunArgs),
}

#[derive(Args)]
struct CharacterizeArgs {
    /// First idle-delay decade exponent (10^start cycles).
    #[arg(long, default_value_t = 2)]
    start_exp: u32,

    /// Last idle-delay decade exponent (10^end cycles).
    #[arg(long, default_value_t = 9)]
    end_exp: u32,

    /// Geometric sweep points per decade.
    #[arg(long, default_value_t = 8)]
    points_per_decade: u32,

    /// Custom gating-table config file (`stage,min_idle,latency_cycles,power_watts`
    /// records); overrides --profile.
    #[arg(long)]
    table: Option<PathBuf>,

    /// Artifact file name, relative to the output directory.
    #[arg(long, default_value = "characterize.csv")]
    output: String,
}

#[derive(Subcommand)]
enum AttackCommand {
    /// Expert-depth recovery against the routing gadget (gap sweep).
    Moe(MoeArgs),
    /// Early-exit recovery through the rewarm staircase.
    EarlyExit(EarlyExitArgs),
    /// Membership inference through the early-exit channel.
    Mia(MiaArgs),
}

#[derive(Args)]
struct MoeArgs {
    /// Single layer gap to test (shorthand for --gap-min N --gap-max N).
    #[arg(long, conflicts_with_all = ["gap_min", "gap_max"])]
    gap: Option<usize>,

    /// Smallest layer gap in the sweep.
    #[arg(long, default_value_t = 2)]
    gap_min: usize,

    /// Largest layer gap in the sweep.
    #[arg(long, default_value_t = 14)]
    gap_max: usize,

    /// Scored trials per gap.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,

    /// Layers in the deep (high-expert) network variant.
    #[arg(long, default_value_t = 24)]
    layers_high: usize,

    /// Per-layer compute cycles before each accelerator call.
    #[arg(long, default_value_t = 50_000)]
    per_layer_compute: u64,

    /// Gaussian jitter sigma on per-layer compute, cycles.
    #[arg(long, default_value_t = 8_000.0)]
    jitter_sigma: f64,

    /// Cycles before the nominal deep-variant completion at which the
    /// attacker issues its probe.
    #[arg(long, default_value_t = gatesim::attacker::DEFAULT_PROBE_LEAD)]
    probe_lead: u64,

    /// Attacker probe dispatch latency, cycles.
    #[arg(long, default_value_t = gatesim::attacker::DEFAULT_PROBE_SETUP_DELAY)]
    probe_setup_delay: u64,

    /// Labeled calibration trials per class.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_TRIALS)]
    calibration_trials: usize,

    /// Artifact file name, relative to the output directory.
    #[arg(long, default_value = "moe_gap_sweep.csv")]
    output: String,
}

#[derive(Args)]
struct EarlyExitArgs {
    /// Scored trials.
    #[arg(long, default_value_t = 20_000)]
    trials: usize,

    /// Transformer layers in the full forward pass.
    #[arg(long, default_value_t = 6)]
    total_layers: usize,

    /// Layer after which the early-exit path stops computing.
    #[arg(long, default_value_t = 2)]
    exit_after: usize,

    /// Per-layer compute cycles.
    #[arg(long, default_value_t = 12_000)]
    per_layer_compute: u64,

    /// Attacker probe dispatch latency after victim completion, cycles.
    #[arg(long, default_value_t = 1_000)]
    probe_setup_delay: u64,

    /// Labeled calibration trials per class.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_TRIALS)]
    calibration_trials: usize,

    /// Also write the scored observations as CSV next to the report.
    #[arg(long)]
    dump_observations: bool,

    /// Artifact file name, relative to the output directory.
    #[arg(long, default_value = "early_exit_attack.json")]
    output: String,
}

#[derive(Args)]
struct MiaArgs {
    /// Scored trials.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,

    /// Probability a member input takes the early exit.
    #[arg(long, default_value_t = 0.78)]
    p_exit_member: f64,

    /// Probability a non-member input takes the early exit.
    #[arg(long, default_value_t = 0.16)]
    p_exit_nonmember: f64,

    /// Prior probability that a scored trial queries a member.
    #[arg(long, default_value_t = 0.5)]
    member_prior: f64,

    /// Labeled calibration trials per class.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_TRIALS)]
    calibration_trials: usize,

    /// Also write the scored observations as CSV next to the report.
    #[arg(long)]
    dump_observations: bool,

    /// Artifact file name, relative to the output directory.
    #[arg(long, default_value = "mia_attack.json")]
    output: String,
}

#[derive(Args)]
struct CovertArgs {
    /// Message to transmit.
    #[arg(long)]
    message: String,

    /// Gap source: `amx`, `avx512`, or `custom:<cycles>`.
    #[arg(long, default_value = "amx", value_parser = parse_source)]
    source: GapSource,

    /// Network noise preset.
    #[arg(long, value_enum, default_value_t = PresetArg::OneHop)]
    preset: PresetArg,

    /// Gaussian noise sigma in cycles; overrides --preset.
    #[arg(long)]
    sigma: Option<f64>,

    /// Probe rounds batched per transmitted bit (N).
    #[arg(long, default_value_t = 1_000)]
    trials_per_bit: usize,

    /// Timer grid in seconds; 0 keeps cycle-exact timing.
    #[arg(long, default_value_t = 0.0)]
    timer_resolution: f64,

    /// Base response latency carrying the gap, cycles.
    #[arg(long, default_value_t = gatesim::channel::DEFAULT_BASE_LATENCY)]
    base: f64,

    /// Seconds per probe round, for bandwidth accounting.
    #[arg(long, default_value_t = gatesim::channel::DEFAULT_ROUND_TIME)]
    round_time: f64,

    /// Clock frequency used to convert the timer grid to cycles.
    #[arg(long, default_value_t = gatesim::DEFAULT_FREQUENCY_HZ)]
    frequency_hz: f64,

    /// Also write every raw per-bit sample as CSV next to the summary.
    #[arg(long)]
    dump_samples: bool,

    /// Artifact file name, relative to the output directory.
    #[arg(long, default_value = "covert.json")]
    output: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    /// Same-host observer: sigma 3000 cycles.
    Localhost,
    /// One network hop: sigma 30000 cycles.
    OneHop,
}

#[derive(Args)]
struct ResilienceArgs {
    /// Gap source: `amx`, `avx512`, or `custom:<cycles>`.
    #[arg(long, default_value = "amx", value_parser = parse_source)]
    source: GapSource,

    /// Probe rounds batched per bit (N).
    #[arg(long, default_value_t = 500)]
    trials: usize,

    /// Required per-bit decoding confidence.
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,

    /// Rows in the CSV accuracy-versus-sigma sweep (csv format only).
    #[arg(long, default_value_t = 21)]
    sweep_points: usize,

    /// Artifact file name, relative to the output directory.
    #[arg(long, default_value = "resilience.json")]
    output: String,
}

#[derive(Args)]
struct MagnifyArgs {
    /// Sleep stage whose upper boundary the probe straddles.
    #[arg(long, default_value_t = 3)]
    boundary_stage: usize,

    /// Alignment slack epsilon, cycles.
    #[arg(long, default_value_t = gatesim::magnifier::DEFAULT_EPSILON)]
    epsilon: u64,

    /// Largest victim delay delta in the sweep (default 2*epsilon).
    #[arg(long)]
    delta_max: Option<u64>,

    /// Sweep step in cycles.
    #[arg(long, default_value_t = 1)]
    step: u64,

    /// Artifact file name, relative to the output directory.
    #[arg(long, default_value = "magnify.csv")]
    output: String,
}

#[derive(Args)]
struct MitigateArgs {
    /// Gating policy: `none`, `fixed:<stage>`, or `reset`.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<MitigationPolicy>,

    /// Query one switch rate (switches/sec): prints power/perf overhead
    /// percentages instead of writing a sweep artifact. Requires --policy.
    #[arg(long, requires = "policy")]
    rate: Option<f64>,

    /// Comma-separated switch rates for the sweep artifact.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,

    /// Rerun the early-exit attack under --policy and report residual
    /// leakage instead of overheads. Requires --policy.
    #[arg(long, requires = "policy", conflicts_with = "rate")]
    leakage: bool,

    /// Scored trials for --leakage.
    #[arg(long, default_value_t = 2_000)]
    trials: usize,

    /// Labeled calibration trials per class for --leakage.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_TRIALS)]
    calibration_trials: usize,

    /// Artifact file name, relative to the output directory.
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file path, or `bundled:NAME` for a built-in scenario
    /// (characterize_default, moe_gap_sweep, covert_I_onehop).
    ///
    /// Scenario files are flat `key = value` text with dotted keys. Common
    /// keys: name, kind, seed, profile, table.file, output, format, trials,
    /// attack.probe_lead, attack.probe_setup_delay, attack.calibration_trials,
    /// attack.dump_observations, gadget.moe.*, gadget.early_exit.*, mia.*,
    /// channel.*, covert.message, covert.dump_samples, resilience.*,
    /// magnify.*, mitigate.policy, mitigate.policies, mitigate.rates,
    /// sweep.*. `--help` on the matching subcommand documents each group.
    scenario: String,
}

fn parse_source(s: &str) -> Result<GapSource, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_policy(s: &str) -> Result<MitigationPolicy, String> {
    s.parse().map_err(|e| format!("{e}"))
}

enum Failure {
    /// Exit status 2: the invocation itself is wrong.
    Usage(String),
    /// Exit status 1: valid invocation, failing run.
    Runtime(String),
}

impl From<gatesim::Error> for Failure {
    fn from(e: gatesim::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Characterize(args) => characterize_cmd(g, args),
        Command::Attack(AttackCommand::Moe(args)) => moe_cmd(g, args),
        Command::Attack(AttackCommand::EarlyExit(args)) => early_exit_cmd(g, args),
        Command::Attack(AttackCommand::Mia(args)) => mia_cmd(g, args),
        Command::Covert(args) => covert_cmd(g, args),
        Command::Resilience(args) => resilience_cmd(g, args),
        Command::Magnify(args) => magnify_cmd(g, args),
        Command::Mitigate(args) => mitigate_cmd(g, args),
        Command::Run(args) => run_cmd(g, args),
    }
}

fn emit(sc: &Scenario, out_dir: &std::path::Path) -> Result<Vec<PathBuf>, Failure> {
    let files = run_scenario(sc, out_dir)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(files)
}

fn read_json(path: &std::path::Path) -> Result<serde_json::Value, Failure> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::Runtime(e.to_string()))
}

fn characterize_cmd(g: &GlobalArgs, args: CharacterizeArgs) -> Result<(), Failure> {
    let sc = Scenario {
        name: "characterize".into(),
        seed: g.seed(),
        profile: g.profile().into(),
        table_file: args.table.as_ref().map(|p| p.display().to_string()),
        output: args.output,
        format: g.format(OutputFormat::Csv),
        kind: ScenarioKind::Characterize {
            start_exp: args.start_exp,
            end_exp: args.end_exp,
            points_per_decade: args.points_per_decade,
        },
    };
    emit(&sc, &g.out_dir())?;

    // Headline numbers straight from the model the artifact was built from.
    let table = std::sync::Arc::new(match &sc.table_file {
        Some(path) => {
            PowerGateTable::from_config_str("custom", &std::fs::read_to_string(path)?)?
        }
        None => PowerGateTable::builtin(&sc.profile)?,
    });
    let rows = characterize(
        &table,
        &geometric_sweep(args.start_exp, args.end_exp, args.points_per_decade),
    );
    let max_latency = rows.iter().map(|&(_, l)| l).max().unwrap_or(0);
    println!("points = {}", rows.len());
    println!("max_latency_cycles = {max_latency}");
    Ok(())
}

fn moe_cmd(g: &GlobalArgs, args: MoeArgs) -> Result<(), Failure> {
    let (gap_min, gap_max) = match args.gap {
        Some(gap) => (gap, gap),
        None => (args.gap_min, args.gap_max),
    };
    let gadget = MoeConfig {
        layers_high: args.layers_high,
        layers_low: args.layers_high.saturating_sub(gap_min),
        per_layer_compute: args.per_layer_compute,
        jitter_sigma: args.jitter_sigma,
        ..MoeConfig::default()
    };
    let sc = Scenario {
        name: "attack_moe".into(),
        seed: g.seed(),
        profile: g.profile().into(),
        table_file: None,
        output: args.output,
        format: g.format(OutputFormat::Csv),
        kind: ScenarioKind::MoeGapSweep {
            attack: MoeAttackConfig {
                gadget,
                probe_lead: args.probe_lead,
                probe_setup_delay: args.probe_setup_delay,
                calibration_trials: args.calibration_trials,
            },
            gap_min,
            gap_max,
            trials: args.trials,
        },
    };
    let files = emit(&sc, &g.out_dir())?;
    if sc.format == OutputFormat::Csv {
        // Echo the sweep rows: `gap,accuracy,tpr,fpr,auc`.
        let text = std::fs::read_to_string(&files[0])?;
        for line in text.lines().skip(1) {
            let mut cols = line.split(',');
            let gap = cols.next().unwrap_or("?");
            let acc = cols.next().unwrap_or("?");
            println!("gap {gap}: accuracy = {acc}");
        }
    }
    Ok(())
}

fn early_exit_cmd(g: &GlobalArgs, args: EarlyExitArgs) -> Result<(), Failure> {
    let sc = Scenario {
        name: "attack_early_exit".into(),
        seed: g.seed(),
        profile: g.profile().into(),
        table_file: None,
        output: args.output,
        format: g.format(OutputFormat::Json),
        kind: ScenarioKind::EarlyExitAttack {
            gadget: EarlyExitConfig {
                total_layers: args.total_layers,
                exit_after: args.exit_after,
                per_layer_compute: args.per_layer_compute,
                probe_setup_delay: args.probe_setup_delay,
            },
            trials: args.trials,
            calibration_trials: args.calibration_trials,
            dump_observations: args.dump_observations,
        },
    };
    let files = emit(&sc, &g.out_dir())?;
    print_report_summary(&sc, &files[0])
}

fn mia_cmd(g: &GlobalArgs, args: MiaArgs) -> Result<(), Failure> {
    let sc = Scenario {
        name: "attack_mia".into(),
        seed: g.seed(),
        profile: g.profile().into(),
        table_file: None,
        output: args.output,
        format: g.format(OutputFormat::Json),
        kind: ScenarioKind::MiaAttack {
            attack: MembershipAttackConfig {
                model: MembershipModel {
                    p_exit_member: args.p_exit_member,
                    p_exit_nonmember: args.p_exit_nonmember,
                },
                gadget: EarlyExitConfig::default(),
                member_prior: args.member_prior,
                calibration_trials: args.calibration_trials,
            },
            trials: args.trials,
            dump_observations: args.dump_observations,
        },
    };
    let files = emit(&sc, &g.out_dir())?;
    print_report_summary(&sc, &files[0])
}

fn print_report_summary(sc: &Scenario, path: &std::path::Path) -> Result<(), Failure> {
    if sc.format != OutputFormat::Json {
        return Ok(());
    }
    let report = read_json(path)?;
    for key in ["accuracy", "tpr", "fpr", "tnr", "precision"] {
        if let Some(v) = report["metrics"][key].as_f64() {
            println!("{key} = {v}");
        }
    }
    if let Some(auc) = report["auc"].as_f64() {
        println!("auc = {auc}");
    }
    Ok(())
}

fn covert_cmd(g: &GlobalArgs, args: CovertArgs) -> Result<(), Failure> {
    let sigma = args.sigma.unwrap_or(match args.preset {
        PresetArg::Localhost => LOCALHOST_SIGMA,
        PresetArg::OneHop => ONE_HOP_SIGMA,
    });
    let channel = gatesim::channel::ChannelConfig {
        source: args.source,
        sigma,
        trials_per_bit: args.trials_per_bit,
        timer_resolution: args.timer_resolution,
        round_time: args.round_time,
        frequency_hz: args.frequency_hz,
    };
    let sc = Scenario {
        name: "covert".into(),
        seed: g.seed(),
        profile: g.profile().into(),
        table_file: None,
        output: args.output,
        format: g.format(OutputFormat::Json),
        kind: ScenarioKind::Covert {
            channel,
            base_low: args.base,
            message: args.message,
            dump_samples: args.dump_samples,
        },
    };
    let files = emit(&sc, &g.out_dir())?;
    if sc.format == OutputFormat::Json {
        let summary = read_json(&files[0])?;
        println!(
            "decoded = {}",
            summary["decoded"].as_str().unwrap_or_default()
        );
        println!("ber = {}", summary["ber"]);
    }
    Ok(())
}

fn resilience_cmd(g: &GlobalArgs, args: ResilienceArgs) -> Result<(), Failure> {
    let sc = Scenario {
        name: "resilience".into(),
        seed: g.seed(),
        profile: g.profile().into(),
        table_file: None,
        output: args.output,
        format: g.format(OutputFormat::Json),
        kind: ScenarioKind::Resilience {
            source: args.source,
            n: args.trials,
            confidence: args.confidence,
            sweep_points: args.sweep_points,
        },
    };
    let files = emit(&sc, &g.out_dir())?;
    if sc.format == OutputFormat::Json {
        let summary = read_json(&files[0])?;
        println!("sigma_max_cycles = {}", summary["sigma_max_cycles"]);
    }
    Ok(())
}

fn magnify_cmd(g: &GlobalArgs, args: MagnifyArgs) -> Result<(), Failure> {
    let align = MagnifierAlignment::new(args.boundary_stage, args.epsilon);
    let sc = Scenario {
        name: "magnify".into(),
        seed: g.seed(),
        profile: g.profile().into(),
        table_file: None,
        output: args.output,
        format: g.format(OutputFormat::Csv),
        kind: ScenarioKind::MagnifySweep {
            align,
            delta_max: args.delta_max.unwrap_or(2 * args.epsilon),
            step: args.step,
        },
    };
    emit(&sc, &g.out_dir())?;
    Ok(())
}

fn mitigate_cmd(g: &GlobalArgs, args: MitigateArgs) -> Result<(), Failure> {
    if let Some(rate) = args.rate {
        let policy = args.policy.expect("clap enforces --rate requires --policy");
        let (power, perf) = overhead(&policy, rate)?;
        println!("policy = {policy}");
        println!("switch_rate = {rate}");
        println!("power_pct = {power}");
        println!("perf_pct = {perf}");
        return Ok(());
    }

    if args.leakage {
        let policy = args.policy.expect("clap enforces --leakage requires --policy");
        let sc = Scenario {
            name: "mitigated_leakage".into(),
            seed: g.seed(),
            profile: g.profile().into(),
            table_file: None,
            output: args.output.unwrap_or_else(|| "mitigated_leakage.json".into()),
            format: g.format(OutputFormat::Json),
            kind: ScenarioKind::MitigatedLeakage {
                policy,
                gadget: EarlyExitConfig::default(),
                trials: args.trials,
                calibration_trials: args.calibration_trials,
            },
        };
        let files = emit(&sc, &g.out_dir())?;
        return print_report_summary(&sc, &files[0]);
    }

    let policies = match args.policy {
        Some(p) => vec![p],
        None => vec![
            MitigationPolicy::FixedStage(0),
            MitigationPolicy::FixedStage(1),
            MitigationPolicy::FixedStage(2),
            MitigationPolicy::FixedStage(3),
            MitigationPolicy::FixedStage(4),
            MitigationPolicy::ResetOnSwitch,
        ],
    };
    let rates = args
        .rates
        .unwrap_or_else(|| (0..=20).map(|k| k as f64 * 50.0).collect());
    let sc = Scenario {
        name: "mitigate".into(),
        seed: g.seed(),
        profile: g.profile().into(),
        table_file: None,
        output: args.output.unwrap_or_else(|| "mitigation_overheads.csv".into()),
        format: g.format(OutputFormat::Csv),
        kind: ScenarioKind::MitigationOverheads { policies, rates },
    };
    emit(&sc, &g.out_dir())?;
    Ok(())
}

fn run_cmd(g: &GlobalArgs, args: RunArgs) -> Result<(), Failure> {
    let mut sc = if let Some(name) = args.scenario.strip_prefix("bundled:") {
        bundled_scenario(name)
            .map_err(|_| Failure::Usage(format!("no bundled scenario named `{name}`")))?
    } else {
        let path = PathBuf::from(&args.scenario);
        if !path.is_file() {
            return Err(Failure::Usage(format!(
                "scenario file not found: {}",
                path.display()
            )));
        }
        Scenario::from_config_str(&std::fs::read_to_string(&path)?)?
    };
    // Explicit global flags override what the scenario file says.
    if let Some(seed) = g.seed {
        sc.seed = seed;
    }
    if g.profile.is_some() {
        sc.profile = g.profile().into();
    }
    if g.format.is_some() {
        sc.format = g.format(sc.format);
    }
    emit(&sc, &g.out_dir())?;
    Ok(())
}
