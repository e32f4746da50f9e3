//! End-to-end checks of the `hsps` binary: determinism, exit codes, preset
//! expansion and the emulate/fit pipelines.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hsps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsps"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = hsps(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn exit_code(args: &[&str]) -> i32 {
    hsps(args).status.code().expect("exit code")
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["simulate", "-o", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run_ok(&args);
    path
}

#[test]
fn simulate_is_deterministic_and_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--preset", "model-system", "--pulses", "2e4", "--seed", "7"];
    let a = simulate(dir.path(), "a.tts", &common);
    let b = simulate(dir.path(), "b.tts", &common);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = simulate(dir.path(), "c.tts", &["--preset", "model-system", "--pulses", "2e4", "--seed", "8"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    // Sidecar carries the resolved preset values.
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.tts.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["emitter"]["qy_x"], serde_json::json!(0.61));
    assert_eq!(sidecar["emitter"]["qy_bx"], serde_json::json!(0.7));
    assert_eq!(sidecar["emitter"]["tau_x_ns"], serde_json::json!(1.6));
    assert_eq!(sidecar["emitter"]["tau_bx_ns"], serde_json::json!(0.5));
    assert_eq!(sidecar["emitter"]["alpha"], serde_json::json!(0.72));
    assert_eq!(sidecar["seed"], serde_json::json!(7));
}

#[test]
fn simulate_rejects_zero_pulses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.tts");
    let code = exit_code(&[
        "simulate",
        "--preset",
        "ideal",
        "--pulses",
        "0",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn analytic_headline_values() {
    let eta: f64 = run_ok(&[
        "analytic", "eta-ash", "--qyx", "0.61", "--qybx", "0.7", "--alpha", "1", "--tr", "0",
    ])
    .trim()
    .parse()
    .unwrap();
    assert!((eta - 0.427).abs() < 1e-3);

    let ps: f64 = run_ok(&["budget", "response-time", "--detector", "snspd", "--layout", "on-chip"])
        .trim()
        .parse()
        .unwrap();
    assert_eq!(ps, 265.0);

    let ratio: f64 = run_ok(&["analytic", "qy-ratio", "--tau-x", "1.6", "--tau-bx", "0.5", "--beta", "4"])
        .trim()
        .parse()
        .unwrap();
    assert_eq!(ratio, 1.25);
}

fn parse_csv_column(csv: &str, column: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|&h| h == column).expect("column exists");
    lines
        .map(|l| {
            let field = l.split(',').nth(idx).unwrap();
            if field.is_empty() {
                f64::NAN
            } else {
                field.parse().unwrap()
            }
        })
        .collect()
}

#[test]
fn timed_sweep_peaks_near_the_optimal_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let stream = simulate(
        dir.path(),
        "ideal.tts",
        &["--preset", "ideal", "--pulses", "2e5", "--seed", "3", "--r1", "1.0", "--dead-time", "0"],
    );
    let csv = run_ok(&[
        "emulate",
        stream.to_str().unwrap(),
        "--scheme",
        "timed",
        "--t-c",
        "0.5",
        "--t-f",
        "0",
        "--sweep",
        "gate",
        "--from",
        "0.1",
        "--to",
        "1.9",
        "--steps",
        "13",
        "--overlay-analytic",
    ]);
    let eff = parse_csv_column(&csv, "efficiency");
    let gates = parse_csv_column(&csv, "t_c_ns");
    let best = eff
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| gates[i])
        .unwrap();
    let t_opt = 4.0_f64.ln() / 3.0;
    let step = (1.9 - 0.1) / 12.0;
    assert!(
        (best - t_opt).abs() <= step + 1e-9,
        "peak at {best}, optimum {t_opt}, step {step}"
    );

    // The analytic overlay tracks the measured efficiencies.
    let overlay = parse_csv_column(&csv, "analytic_efficiency");
    for (e, a) in eff.iter().zip(&overlay) {
        assert!((e - a).abs() < 0.01, "emulated {e} vs analytic {a}");
    }
}

#[test]
fn report_values_identical_across_formats() {
    let dir = tempfile::tempdir().unwrap();
    let stream = simulate(
        dir.path(),
        "s.tts",
        &["--preset", "paper-nqd", "--pulses", "5e4", "--seed", "11"],
    );
    let args_tail = [
        "--scheme", "ash", "--t-r", "0.5", "--sweep", "filter", "--from", "0", "--to", "1",
        "--steps", "3",
    ];
    let mut csv_args = vec!["emulate", stream.to_str().unwrap()];
    csv_args.extend_from_slice(&args_tail);
    let csv = run_ok(&csv_args);

    let mut json_args = csv_args.clone();
    json_args.extend_from_slice(&["--format", "json"]);
    let json = run_ok(&json_args);
    let rows: serde_json::Value = serde_json::from_str(&json).unwrap();

    let eff_csv = parse_csv_column(&csv, "efficiency");
    for (i, row) in rows.as_array().unwrap().iter().enumerate() {
        let eff_json = row["efficiency"].as_f64().unwrap();
        assert!(
            (eff_csv[i] - eff_json).abs() <= 1e-12 * eff_json.abs().max(1.0),
            "row {i}: csv {} vs json {}",
            eff_csv[i],
            eff_json
        );
    }
}

#[test]
fn empty_stream_gives_zero_report() {
    let dir = tempfile::tempdir().unwrap();
    let stream = simulate(
        dir.path(),
        "dark.tts",
        &["--preset", "ideal", "--qyx", "0", "--qybx", "0", "--pulses", "1000", "--seed", "1"],
    );
    let csv = run_ok(&["emulate", stream.to_str().unwrap(), "--scheme", "tgf", "--t-f", "0.3"]);
    let eff = parse_csv_column(&csv, "efficiency");
    assert_eq!(eff, vec![0.0]);
    let purity = parse_csv_column(&csv, "purity");
    assert!(purity[0].is_nan(), "no-signal purity should be empty");
}

#[test]
fn fit_recovers_generator_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let stream = simulate(
        dir.path(),
        "dot.tts",
        &["--preset", "paper-nqd", "--pulses", "3e6", "--seed", "5"],
    );
    let body: serde_json::Value =
        serde_json::from_str(&run_ok(&["fit", stream.to_str().unwrap(), "--k", "3"])).unwrap();

    let lifetimes: Vec<f64> = body["fit"]["components"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["lifetime_ns"].as_f64().unwrap())
        .collect();
    let expected = [0.3, 2.017, 30.0];
    for (got, want) in lifetimes.iter().zip(expected) {
        assert!(
            (got - want).abs() / want < 0.10,
            "lifetime {got} vs {want} (all: {lifetimes:?})"
        );
    }

    let qy_x = body["emitter"]["qy_x"].as_f64().unwrap();
    assert!((qy_x - 0.1729).abs() / 0.1729 < 0.10, "qy_x {qy_x}");
}

#[test]
fn solver_failures_exit_with_code_3() {
    assert_eq!(
        exit_code(&["analytic", "solve-tgf-gate", "--preset", "ideal", "--s-target", "1.0"]),
        3
    );
}

#[test]
fn io_failures_exit_with_code_4() {
    assert_eq!(
        exit_code(&["emulate", "/definitely/not/here.tts", "--scheme", "tgf", "--alpha", "0.5"]),
        4
    );
}

#[test]
fn scheme_stream_mismatch_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    // Everything routed to detector 1: no signal channel for beam-splitter
    // heralding.
    let stream = simulate(
        dir.path(),
        "one.tts",
        &["--preset", "ideal", "--pulses", "5000", "--seed", "2", "--r1", "1.0"],
    );
    assert_eq!(exit_code(&["emulate", stream.to_str().unwrap(), "--scheme", "bs"]), 2);
}
