//! End-to-end tests of the binary: exit codes, artifact sets, determinism,
//! and the synth/table round trip.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nls-direct"))
}

/// Fresh per-test scratch directory under the target tree.
fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SOLITON_CONFIG: &str = r#"{
  "potential": {"model": "soliton", "c": 2.0, "a": 1.0, "p": 1.0},
  "nx": 120,
  "lambda": {"min": -2.0, "max": 2.0, "count": 5}
}"#;

#[test]
fn zero_pipeline_writes_all_artifacts_and_exits_cleanly() {
    let dir = scratch("zero_pipeline");
    let out_dir = dir.join("out");
    let out = run(&["pipeline", "--n", "60", "--out", out_dir.to_str().unwrap()]);
    assert_success(&out);
    assert_eq!(
        file_names(&out_dir),
        [
            "omega_left.csv",
            "omega_right.csv",
            "resolved_config.json",
            "scattering.csv",
            "spectral.json"
        ]
    );

    let spectral: serde_json::Value = serde_json::from_str(&read(&out_dir, "spectral.json")).unwrap();
    assert_eq!(spectral["bound_states"].as_array().unwrap().len(), 0);

    // Default lambda grid: header plus 201 rows.
    let scattering = read(&out_dir, "scattering.csv");
    assert_eq!(scattering.lines().count(), 202);
    assert!(scattering.starts_with("lambda,a_l1_re,a_l1_im,"));

    // Zero potential: every omega sample is zero.
    for name in ["omega_left.csv", "omega_right.csv"] {
        for line in read(&out_dir, name).lines().skip(1) {
            let omega: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(omega, 0.0, "{name}: {line}");
        }
    }
}

#[test]
fn invalid_grid_is_a_config_error() {
    let dir = scratch("invalid_grid");
    let out = run(&["pipeline", "--n", "1", "--out", dir.to_str().unwrap()]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nx"));
}

#[test]
fn malformed_lambda_grid_flag_is_a_config_error() {
    let dir = scratch("bad_lambda");
    let out = run(&["pipeline", "--lambda-grid", "1:2", "--out", dir.to_str().unwrap()]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("MIN:MAX:COUNT"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = scratch("missing_config");
    let missing = dir.join("nope.json");
    let out = run(&["pipeline", "--config", missing.to_str().unwrap()]);
    assert_exit(&out, 2);
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let dir = scratch("unknown_field");
    let config = dir.join("config.json");
    fs::write(&config, r#"{"nx": 60, "pencil_n": 10}"#).unwrap();
    let out = run(&["pipeline", "--config", config.to_str().unwrap()]);
    assert_exit(&out, 2);
}

#[test]
fn flags_override_config_fields() {
    let dir = scratch("flag_override");
    let config = dir.join("config.json");
    fs::write(&config, r#"{"nx": 60, "l": 10.0}"#).unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--n",
        "80",
        "--lambda-grid",
        "-1:1:3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let resolved: serde_json::Value =
        serde_json::from_str(&read(&out_dir, "resolved_config.json")).unwrap();
    assert_eq!(resolved["nx"], 80);
    assert_eq!(resolved["l"], 10.0);
    assert_eq!(resolved["lambda"]["count"], 3);
    // The echoed config is resolved: the automatic stride is filled in.
    assert_eq!(resolved["pencil"]["stride"], 3);
    assert_eq!(read(&out_dir, "scattering.csv").lines().count(), 4);
}

#[test]
fn synth_table_round_trip_is_bit_exact() {
    let dir = scratch("round_trip");
    fs::write(dir.join("model.json"), SOLITON_CONFIG).unwrap();

    let syn_dir = dir.join("syn");
    let out = run(&[
        "synth",
        "--config",
        dir.join("model.json").to_str().unwrap(),
        "--out",
        syn_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let table = read(&syn_dir, "potential.txt");
    // Header plus one row per node and midpoint: 4*nx + 1.
    assert_eq!(table.lines().count(), 1 + 4 * 120 + 1);

    // Table path relative to the config file's own directory.
    fs::write(
        dir.join("table.json"),
        r#"{
          "potential": {"model": "table", "path": "syn/potential.txt"},
          "nx": 120,
          "lambda": {"min": -2.0, "max": 2.0, "count": 5}
        }"#,
    )
    .unwrap();

    let run_a = dir.join("a");
    let run_b = dir.join("b");
    assert_success(&run(&[
        "pipeline",
        "--config",
        dir.join("model.json").to_str().unwrap(),
        "--out",
        run_a.to_str().unwrap(),
    ]));
    assert_success(&run(&[
        "pipeline",
        "--config",
        dir.join("table.json").to_str().unwrap(),
        "--out",
        run_b.to_str().unwrap(),
    ]));
    for name in ["omega_left.csv", "omega_right.csv", "spectral.json", "scattering.csv"] {
        assert_eq!(read(&run_a, name), read(&run_b, name), "{name} differs");
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = scratch("determinism");
    fs::write(dir.join("config.json"), SOLITON_CONFIG).unwrap();
    let out_dir = dir.join("out");
    let config = dir.join("config.json");
    let args = [
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    assert_success(&run(&args));
    let first: Vec<(String, String)> =
        file_names(&out_dir).into_iter().map(|n| (read(&out_dir, &n), n)).collect();
    assert_success(&run(&args));
    for (contents, name) in first {
        assert_eq!(read(&out_dir, &name), contents, "{name} changed between runs");
    }
}

#[test]
fn kernels_subcommand_dumps_triangles() {
    let dir = scratch("kernels");
    let out_dir = dir.join("out");
    let out = run(&["kernels", "--n", "20", "--out", out_dir.to_str().unwrap()]);
    assert_success(&out);
    assert_eq!(
        file_names(&out_dir),
        ["kbar.json", "m.json", "omega_left.csv", "omega_right.csv", "resolved_config.json"]
    );
    let kbar: serde_json::Value = serde_json::from_str(&read(&out_dir, "kbar.json")).unwrap();
    assert_eq!(kbar["kind"], "kbar");
    assert_eq!(kbar["nx"], 20);
    assert_eq!(kbar["rows"].as_array().unwrap().len(), 41);
    assert_eq!(kbar["rows"][40]["up"].as_array().unwrap().len(), 81);
    let m: serde_json::Value = serde_json::from_str(&read(&out_dir, "m.json")).unwrap();
    assert_eq!(m["kind"], "m");
}

#[test]
fn spectral_subcommand_writes_spectral_only() {
    let dir = scratch("spectral_only");
    fs::write(dir.join("config.json"), SOLITON_CONFIG).unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "spectral",
        "--config",
        dir.join("config.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert_eq!(file_names(&out_dir), ["resolved_config.json", "spectral.json"]);
}

#[test]
fn scattering_subcommand_writes_the_table_only() {
    let dir = scratch("scattering_only");
    fs::write(dir.join("config.json"), SOLITON_CONFIG).unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "scattering",
        "--config",
        dir.join("config.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert_eq!(file_names(&out_dir), ["resolved_config.json", "scattering.csv"]);
    assert_eq!(read(&out_dir, "scattering.csv").lines().count(), 6);
}

#[test]
fn convergence_writes_the_study_table() {
    let dir = scratch("convergence");
    fs::write(dir.join("config.json"), SOLITON_CONFIG).unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "convergence",
        "--config",
        dir.join("config.json").to_str().unwrap(),
        "--n-list",
        "60,120",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let table = read(&out_dir, "convergence.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "n,relative_error,ratio");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("60,"));
    assert!(lines[1].ends_with(','), "first row has no ratio: {}", lines[1]);
    assert!(lines[2].starts_with("120,"));
    assert!(!lines[2].ends_with(','), "second row has a ratio: {}", lines[2]);
}

#[test]
fn convergence_single_entry_has_empty_ratio() {
    let dir = scratch("convergence_single");
    fs::write(dir.join("config.json"), SOLITON_CONFIG).unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "convergence",
        "--config",
        dir.join("config.json").to_str().unwrap(),
        "--n-list",
        "80",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let table = read(&out_dir, "convergence.csv");
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn convergence_without_analytic_reference_is_a_config_error() {
    let dir = scratch("convergence_zero");
    let out = run(&["convergence", "--n-list", "60", "--out", dir.to_str().unwrap()]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("reference"));
}

#[test]
fn mismatched_reference_is_a_config_error() {
    let dir = scratch("convergence_mismatch");
    fs::write(dir.join("config.json"), SOLITON_CONFIG).unwrap();
    let out = run(&[
        "convergence",
        "--config",
        dir.join("config.json").to_str().unwrap(),
        "--reference",
        "multisoliton",
        "--n-list",
        "60",
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn synth_of_the_zero_model_writes_zeros() {
    let dir = scratch("synth_zero");
    let out_dir = dir.join("out");
    let out = run(&["synth", "--n", "40", "--out", out_dir.to_str().unwrap()]);
    assert_success(&out);
    let table = read(&out_dir, "potential.txt");
    assert_eq!(table.lines().count(), 1 + 4 * 40 + 1);
    for line in table.lines().skip(1) {
        let u: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert_eq!(u, 0.0, "{line}");
    }
}

#[test]
fn soliton_synth_center_row_is_minus_two() {
    let dir = scratch("synth_soliton");
    fs::write(dir.join("config.json"), SOLITON_CONFIG).unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "synth",
        "--config",
        dir.join("config.json").to_str().unwrap(),
        "--n",
        "300",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let table = read(&out_dir, "potential.txt");
    let center = table.lines().nth(1 + 2 * 300).unwrap();
    let mut cols = center.split_whitespace();
    assert_eq!(cols.next().unwrap().parse::<f64>().unwrap(), 0.0);
    assert_eq!(cols.next().unwrap().parse::<f64>().unwrap(), -2.0);
}
