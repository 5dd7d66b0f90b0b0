//! End-to-end tests of the `zenosim` binary: flags, exit codes, CSV/JSON
//! output, and config-file handling.

use std::io::Write;
use std::process::{Command, Output};

fn zenosim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zenosim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

fn parse_csv(out: &Output) -> (String, Vec<Vec<String>>) {
    let mut lines = stdout_lines(out).into_iter();
    let header = lines.next().expect("csv header");
    let rows = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn write_config(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f.flush().unwrap();
    f
}

// ---------------------------------------------------------------------------
// fig1
// ---------------------------------------------------------------------------

#[test]
fn fig1_grid_size_and_header() {
    let out = zenosim(&["fig1", "--t-points", "200", "--de-points", "100"]);
    assert!(out.status.success());
    let (header, rows) = parse_csv(&out);
    assert_eq!(header, "de_over_decrit,t,p1");
    assert_eq!(rows.len(), 20_000);
    // line endings are plain \n
    assert!(!String::from_utf8(out.stdout).unwrap().contains('\r'));
}

#[test]
fn fig1_classical_rows_follow_cosine() {
    let out = zenosim(&[
        "fig1",
        "--de-range",
        "10,10",
        "--de-points",
        "1",
        "--t-points",
        "3",
    ]);
    assert!(out.status.success());
    let (_, rows) = parse_csv(&out);
    assert_eq!(rows.len(), 3);
    for row in rows {
        let t: f64 = row[1].parse().unwrap();
        let p1: f64 = row[2].parse().unwrap();
        assert!((p1 - t.cos().powi(2)).abs() < 0.01, "t = {t}, p1 = {p1}");
    }
}

#[test]
fn fig1_rejects_bad_tau() {
    let out = zenosim(&["fig1", "--tau", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--tau"), "stderr: {err}");
}

#[test]
fn fig1_rejects_bad_range_and_counts() {
    let out = zenosim(&["fig1", "--de-range", "0,1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = zenosim(&["fig1", "--t-points", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = zenosim(&["fig1", "--de-range", "oops"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fig1_json_array() {
    let out = zenosim(&[
        "fig1",
        "--t-points",
        "4",
        "--de-points",
        "2",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows[0].get("de_over_decrit").is_some());
    assert!(rows[0].get("t").is_some());
    assert!(rows[0].get("p1").is_some());
}

#[test]
fn fig1_output_file_and_jobs_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.csv");
    let p2 = dir.path().join("b.csv");
    let base = ["fig1", "--t-points", "50", "--de-points", "10"];
    let mut args1: Vec<&str> = base.to_vec();
    args1.extend(["--jobs", "1", "--output", p1.to_str().unwrap()]);
    let mut args2: Vec<&str> = base.to_vec();
    args2.extend(["--jobs", "4", "--output", p2.to_str().unwrap()]);
    assert!(zenosim(&args1).status.success());
    assert!(zenosim(&args2).status.success());
    let a = std::fs::read(&p1).unwrap();
    let b = std::fs::read(&p2).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "output depends on the worker count");
}

// ---------------------------------------------------------------------------
// fig2
// ---------------------------------------------------------------------------

#[test]
fn fig2_default_has_five_pulse_groups() {
    let out = zenosim(&["fig2", "--de-points", "5"]);
    assert!(out.status.success());
    let (header, rows) = parse_csv(&out);
    assert_eq!(header, "pulses,de_over_decrit,p12");
    assert_eq!(rows.len(), 25);
    let mut groups: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
    groups.dedup();
    assert_eq!(groups, vec!["1", "4", "16", "64", "continuous"]);
}

#[test]
fn fig2_continuous_classical_regime() {
    let out = zenosim(&[
        "fig2",
        "--pulses",
        "continuous",
        "--de-range",
        "10,10",
        "--de-points",
        "3",
    ]);
    assert!(out.status.success());
    let (_, rows) = parse_csv(&out);
    assert_eq!(rows.len(), 3);
    for row in rows {
        let p12: f64 = row[2].parse().unwrap();
        assert!(p12 >= 0.95, "p12 = {p12}");
    }
}

#[test]
fn fig2_rejects_overlapping_pulses() {
    let out = zenosim(&["fig2", "--duty", "0.5", "--pulses", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--duty"), "stderr: {err}");
    // but duty 0.5 with 2 pulses fits exactly
    let out = zenosim(&["fig2", "--duty", "0.5", "--pulses", "2", "--de-points", "2"]);
    assert!(out.status.success());
}

#[test]
fn fig2_rejects_unknown_pulse_spec() {
    let out = zenosim(&["fig2", "--pulses", "sometimes"]);
    assert_eq!(out.status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

const CRITICAL_CONFIG: &str = r#"{
    "version": 1,
    "system": { "energies": [0.0, 1.0], "hbar": 1.0 },
    "drive": { "kind": "resonant_two_level", "v0": 1.0, "omega": 1.0, "t0": 0.0 },
    "schedule": { "preset": "continuous", "tau": 2.0, "e": 0.0, "delta_e": 0.5 },
    "method": "closed_form"
}"#;

#[test]
fn evolve_critical_damping_sample() {
    // tau * dE^2 = 0.5 gives Omega = 1 = p: critically damped; the sampled
    // normalized p1 at t = 1 is 1/(1 + (1/2)^2) = 0.8
    let cfg = write_config(CRITICAL_CONFIG);
    let out = zenosim(&[
        "evolve",
        "--config",
        cfg.path().to_str().unwrap(),
        "--sample-interval",
        "0.5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = parse_csv(&out);
    assert_eq!(header, "t,p_1,p_2,norm");
    let at_1 = rows
        .iter()
        .find(|r| r[0].parse::<f64>().unwrap() == 1.0)
        .expect("row at t = 1");
    let p1: f64 = at_1[1].parse().unwrap();
    assert!((p1 - 0.8).abs() < 1e-9, "p1(1) = {p1}");
}

#[test]
fn evolve_unmeasured_norm_column_is_one() {
    let cfg = write_config(
        r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0], "hbar": 1.0 },
        "drive": { "kind": "resonant_two_level", "v0": 1.0, "omega": 1.0, "t0": 0.0 },
        "schedule": { "preset": "continuous", "tau": 3.0, "e": 0.0, "delta_e": "unmeasured" }
    }"#,
    );
    let out = zenosim(&[
        "evolve",
        "--config",
        cfg.path().to_str().unwrap(),
        "--sample-interval",
        "0.25",
    ]);
    assert!(out.status.success());
    let (_, rows) = parse_csv(&out);
    assert!(rows.len() >= 13);
    for r in rows {
        let norm: f64 = r[3].parse().unwrap();
        assert!((norm - 1.0).abs() <= 1e-12, "norm = {norm}");
    }
}

#[test]
fn evolve_three_level_population_pump() {
    // V = 0, record E = E2, equal initial amplitudes: p_2 climbs toward 1
    let cfg = write_config(
        r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0, 2.0], "hbar": 1.0 },
        "drive": { "kind": "none" },
        "schedule": { "preset": "continuous", "tau": 6.0, "e": 1.0, "delta_e": 0.4 },
        "method": "rk4",
        "integrator": { "step": 0.001 },
        "initial_state": [[0.577350269189626, 0.0], [0.577350269189626, 0.0], [0.577350269189626, 0.0]]
    }"#,
    );
    let out = zenosim(&[
        "evolve",
        "--config",
        cfg.path().to_str().unwrap(),
        "--sample-interval",
        "0.5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = parse_csv(&out);
    assert_eq!(header, "t,p_1,p_2,p_3,norm");
    let mut last = 0.0;
    for r in &rows {
        let p2: f64 = r[2].parse().unwrap();
        assert!(p2 >= last - 1e-12, "p_2 not monotone");
        last = p2;
    }
    assert!(last > 0.99, "final p_2 = {last}");
}

#[test]
fn evolve_methods_round_trip() {
    let cfg = write_config(CRITICAL_CONFIG);
    let path = cfg.path().to_str().unwrap();
    let run = |method: &str| {
        let out = zenosim(&[
            "evolve",
            "--config",
            path,
            "--sample-interval",
            "0.1",
            "--method",
            method,
        ]);
        assert!(out.status.success());
        parse_csv(&out).1
    };
    let a = run("closed-form");
    let b = run("rk4");
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        for col in 1..=2 {
            let pa: f64 = x[col].parse().unwrap();
            let pb: f64 = y[col].parse().unwrap();
            assert!((pa - pb).abs() < 1e-8, "t = {}: {pa} vs {pb}", x[0]);
        }
    }
}

#[test]
fn evolve_explicit_segment_list() {
    let cfg = write_config(
        r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0], "hbar": 1.0 },
        "drive": { "kind": "resonant_two_level", "v0": 1.0, "omega": 1.0, "t0": 0.0 },
        "schedule": { "segments": [
            { "t_start": 0.0, "t_end": 0.05, "e": 0.0, "delta_e": 0.05 },
            { "t_start": 0.05, "t_end": 1.6207963267948966, "delta_e": "unmeasured" }
        ] }
    }"#,
    );
    let out = zenosim(&["evolve", "--config", cfg.path().to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (_, rows) = parse_csv(&out);
    // strong pulse pins the state, then a free pi pulse transfers it
    let p2: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert!(p2 > 0.98, "final p_2 = {p2}");
}

#[test]
fn evolve_qnd_preset() {
    let cfg = write_config(
        r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0], "hbar": 1.0 },
        "drive": { "kind": "resonant_two_level", "v0": 1.0, "omega": 1.0, "t0": 0.0 },
        "schedule": { "preset": "qnd", "periods": 2, "pulse_width": 0.003,
                      "e": 0.0, "delta_e": 0.5 }
    }"#,
    );
    let out = zenosim(&["evolve", "--config", cfg.path().to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (_, rows) = parse_csv(&out);
    // boundaries: start, 2 x (pulse on/off), final transfer window end
    assert_eq!(rows.len(), 6);
    let t_end: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert!((t_end - 2.5 * std::f64::consts::PI).abs() < 1e-12);
    // the monitored pi pulse still transfers nearly fully
    let p2: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert!(p2 > 0.98, "final p_2 = {p2}");
}

#[test]
fn evolve_rejects_schema_violations() {
    // unknown key, with the path reported
    let cfg = write_config(
        r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0], "hbar": 1.0, "mass": 3 },
        "drive": { "kind": "none" },
        "schedule": { "preset": "continuous", "tau": 1.0, "delta_e": 0.5 }
    }"#,
    );
    let out = zenosim(&["evolve", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("system") && err.contains("mass"),
        "stderr: {err}"
    );

    // missing version
    let cfg = write_config(
        r#"{
        "system": { "energies": [0.0, 1.0] },
        "drive": { "kind": "none" },
        "schedule": { "preset": "continuous", "tau": 1.0, "delta_e": 0.5 }
    }"#,
    );
    let out = zenosim(&["evolve", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("version"));

    // wrong version value
    let cfg = write_config(
        r#"{
        "version": 2,
        "system": { "energies": [0.0, 1.0] },
        "drive": { "kind": "none" },
        "schedule": { "preset": "continuous", "tau": 1.0, "delta_e": 0.5 }
    }"#,
    );
    let out = zenosim(&["evolve", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // segment problem names the index
    let cfg = write_config(
        r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0] },
        "drive": { "kind": "none" },
        "schedule": { "segments": [
            { "t_start": 0.0, "t_end": 1.0, "delta_e": 0.5 },
            { "t_start": 2.0, "t_end": 3.0, "delta_e": 0.5 }
        ] }
    }"#,
    );
    let out = zenosim(&["evolve", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("segment 1"), "stderr: {err}");

    // general_matrix drives are library-only
    let cfg = write_config(
        r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0] },
        "drive": { "kind": "general_matrix" },
        "schedule": { "preset": "continuous", "tau": 1.0, "delta_e": 0.5 }
    }"#,
    );
    let out = zenosim(&["evolve", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evolve_numeric_failure_exits_3() {
    // gamma_2 = 1e6 on a state in level 2: norm underflows mid-run
    let cfg = write_config(
        r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0], "hbar": 1.0 },
        "drive": { "kind": "none" },
        "schedule": { "preset": "continuous", "tau": 1.0, "e": 0.0, "delta_e": 0.001 },
        "initial_state": [[0.0, 0.0], [1.0, 0.0]]
    }"#,
    );
    let out = zenosim(&["evolve", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("underflow"), "stderr: {err}");
}

#[test]
fn evolve_json_rows() {
    let cfg = write_config(CRITICAL_CONFIG);
    let out = zenosim(&[
        "evolve",
        "--config",
        cfg.path().to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2); // initial + boundary
    assert_eq!(rows[0]["t"], 0.0);
    assert_eq!(rows[0]["p"][0], 1.0);
    assert_eq!(rows[1]["boundary"], true);
}

#[test]
fn evolve_tau_convention_flag() {
    let pulsed = r#"{
        "version": 1,
        "system": { "energies": [0.0, 1.0], "hbar": 1.0 },
        "drive": { "kind": "resonant_two_level", "v0": 1.0, "omega": 1.0, "t0": 0.0 },
        "schedule": { "preset": "pulsed", "n": 4, "total_time": 1.5707963267948966,
                      "e": 0.0, "delta_e": 0.1 }
    }"#;
    let cfg = write_config(pulsed);
    let path = cfg.path().to_str().unwrap();
    let run = |conv: &str| {
        let out = zenosim(&["evolve", "--config", path, "--tau-convention", conv]);
        assert!(out.status.success());
        parse_csv(&out).1.last().unwrap()[2].parse::<f64>().unwrap()
    };
    let total = run("total");
    let per = run("per-segment");
    assert!((total - per).abs() > 1e-6, "{total} vs {per}");
}

// ---------------------------------------------------------------------------
// regime
// ---------------------------------------------------------------------------

#[test]
fn regime_classification_output() {
    // dE_crit at tau = 2 pi is 1/sqrt(4 pi) ~ 0.2821
    let out = zenosim(&["regime", "--delta-e", "0.5642"]);
    assert!(out.status.success());
    let (header, rows) = parse_csv(&out);
    assert_eq!(header, "delta_e_crit,omega,w_re,w_im,regime,rabi_period");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][4], "underdamped");

    let out = zenosim(&["regime", "--delta-e", "0.1"]);
    let (_, rows) = parse_csv(&out);
    assert_eq!(rows[0][4], "overdamped");

    let out = zenosim(&["regime", "--delta-e", "unmeasured"]);
    let (_, rows) = parse_csv(&out);
    assert_eq!(rows[0][4], "underdamped");
    let omega: f64 = rows[0][1].parse().unwrap();
    assert_eq!(omega, 0.0);
}

#[test]
fn regime_json_object() {
    let out = zenosim(&["regime", "--delta-e", "0.1", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["regime"], "overdamped");
    assert!(v["delta_e_crit"].as_f64().unwrap() > 0.0);
    assert!(v["w"]["im"].as_f64().unwrap() > 0.0);
}

#[test]
fn regime_rejects_bad_flags() {
    let out = zenosim(&["regime", "--delta-e", "-0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = zenosim(&["regime", "--delta-e", "0.5", "--tau", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--tau"), "stderr: {err}");
}

#[test]
fn seedless_flag_is_accepted() {
    let out = zenosim(&["regime", "--delta-e", "0.5", "--seedless"]);
    assert!(out.status.success());
}

#[test]
fn csv_floats_have_17_significant_digits() {
    let out = zenosim(&["regime", "--delta-e", "0.5"]);
    let (_, rows) = parse_csv(&out);
    // mantissa of 17 significant digits in scientific notation
    let cell = &rows[0][0];
    let mantissa = cell.split('e').next().unwrap();
    let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
    assert_eq!(digits, 17, "cell {cell}");
}
