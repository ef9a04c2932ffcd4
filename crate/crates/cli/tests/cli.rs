//! End-to-end tests that spawn the real `gatesim` binary.

use std::path::Path;
use std::process::{Command, Output};

fn gatesim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gatesim"))
        .args(args)
        .current_dir(dir)
        .env_remove("GATESIM_OUT_DIR")
        .output()
        .expect("spawn gatesim")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn characterize_c1e_has_max_latency_9000() {
    let dir = tempfile::tempdir().unwrap();
    let out = gatesim(&["characterize", "--profile", "c1e", "--out-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("max_latency_cycles = 9000"));
    let csv = std::fs::read_to_string(dir.path().join("characterize.csv")).unwrap();
    assert!(csv.starts_with("delay_cycles,latency_cycles\n"));
    assert!(!csv.contains('\r'), "LF line endings only");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_flag = gatesim(&["--bogus", "characterize"], dir.path());
    assert_eq!(unknown_flag.status.code(), Some(2));

    let unknown_subcommand = gatesim(&["frobnicate"], dir.path());
    assert_eq!(unknown_subcommand.status.code(), Some(2));
    assert!(stderr(&unknown_subcommand).contains("unrecognized subcommand"));

    let bad_value = gatesim(&["resilience", "--source", "banana"], dir.path());
    assert_eq!(bad_value.status.code(), Some(2));
    assert!(stderr(&bad_value).contains("--source"));

    let missing_file = gatesim(&["run", "no_such_file.scn"], dir.path());
    assert_eq!(missing_file.status.code(), Some(2));
    assert!(stderr(&missing_file).contains("not found"));

    let missing_bundled = gatesim(&["run", "bundled:nope"], dir.path());
    assert_eq!(missing_bundled.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = gatesim(
        &["attack", "moe", "--gap", "0", "--trials", "10", "--out-dir", "."],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn bundled_covert_reproducible_through_cli() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = gatesim(&["run", "bundled:covert_I_onehop", "--out-dir", "."], dir_a.path());
    let b = gatesim(&["run", "bundled:covert_I_onehop", "--out-dir", "."], dir_b.path());
    assert_eq!(a.status.code(), Some(0), "stderr: {}", stderr(&a));
    assert_eq!(b.status.code(), Some(0));
    let json_a = std::fs::read(dir_a.path().join("covert_I_onehop.json")).unwrap();
    let json_b = std::fs::read(dir_b.path().join("covert_I_onehop.json")).unwrap();
    assert_eq!(json_a, json_b, "same scenario, same bytes");
    let text = String::from_utf8(json_a).unwrap();
    assert!(text.contains("\"decoded\": \"I\""));
    assert!(text.contains("\"ber\": 0.0"));
}

#[test]
fn resilience_example_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = gatesim(
        &["resilience", "--source", "avx512", "--trials", "500", "--out-dir", "."],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out);
    let sigma: f64 = line
        .lines()
        .find_map(|l| l.strip_prefix("sigma_max_cycles = "))
        .expect("sigma line")
        .parse()
        .unwrap();
    assert!((sigma - 720.894).abs() < 0.01, "sigma_max {sigma}");
}

#[test]
fn mitigate_single_point_prints_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let out = gatesim(&["mitigate", "--policy", "reset", "--rate", "1000"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("power_pct = 11.6"), "stdout: {text}");
    assert!(text.contains("perf_pct = 30"), "stdout: {text}");
    // A value query writes no artifact.
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn covert_dump_samples_writes_sibling_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = gatesim(
        &[
            "covert", "--message", "A", "--trials-per-bit", "4", "--dump-samples",
            "--out-dir", ".",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(dir.path().join("covert.json").is_file());
    let samples = std::fs::read_to_string(dir.path().join("covert_samples.csv")).unwrap();
    assert!(samples.starts_with("bit_index,sample_cycles\n"));
    assert_eq!(samples.lines().count(), 1 + 8 * 4, "header + 8 bits x 4 samples");
}

#[test]
fn scenario_file_from_disk_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("mag.scn"),
        "name = mag\nkind = magnify\nseed = 1\noutput = mag.csv\nformat = csv\nmagnify.step = 50\n",
    )
    .unwrap();
    let out = gatesim(&["run", "mag.scn", "--out-dir", ".", "--seed", "9"], dir.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("mag.csv")).unwrap();
    assert!(csv.starts_with("delta_cycles,observed_latency,amplified_gap\n"));
    // delta 100 = epsilon crosses the stage-3 boundary: gap 11000.
    assert!(csv.contains("100,20000,11000"), "csv: {csv}");
}

#[test]
fn env_var_sets_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("artifacts");
    std::fs::create_dir(&sub).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gatesim"))
        .args(["magnify"])
        .current_dir(dir.path())
        .env("GATESIM_OUT_DIR", &sub)
        .output()
        .expect("spawn gatesim");
    assert_eq!(out.status.code(), Some(0));
    assert!(sub.join("magnify.csv").is_file());
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = gatesim(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for sub in ["characterize", "attack", "covert", "resilience", "magnify", "mitigate", "run"] {
        assert!(text.contains(sub), "--help missing `{sub}`");
    }
    for flag in ["--seed", "--profile", "--out-dir", "--format"] {
        assert!(text.contains(flag), "--help missing `{flag}`");
    }
    let attack_help = gatesim(&["attack", "--help"], dir.path());
    let attack_text = stdout(&attack_help);
    for sub in ["moe", "early-exit", "mia"] {
        assert!(attack_text.contains(sub), "attack --help missing `{sub}`");
    }
}

#[test]
fn custom_table_flag() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("table.cfg"),
        "# stage,min_idle,latency_cycles,power_watts\n0,0,10,100.0\n1,1000,500,90.0\n",
    )
    .unwrap();
    let out = gatesim(
        &["characterize", "--table", "table.cfg", "--end-exp", "4", "--out-dir", "."],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("max_latency_cycles = 500"));
}
