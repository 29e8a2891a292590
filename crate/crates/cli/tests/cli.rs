//! CLI contract smokes: flag surface, input formats, file sinks, and the
//! one-line error protocol. The statistical behavior itself is covered by
//! the library tests and the acceptance gate.

use std::path::Path;
use std::process::Command;

fn cli() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fundrift"));
    cmd.env_remove("FUNDRIFT_THREADS");
    cmd
}

/// Wide fixture: drifting mean plus deterministic pseudo-noise.
fn write_wide_fixture(path: &Path) {
    let n = 80;
    let n_points = 9;
    let mut content = String::from("label");
    for i in 0..n_points {
        content.push_str(&format!(",{}", i as f64 / (n_points - 1) as f64));
    }
    content.push('\n');
    for j in 1..=n {
        let t = j as f64 / n as f64;
        content.push_str(&format!("curve{j}"));
        for i in 0..n_points {
            let s = i as f64 / (n_points - 1) as f64;
            let value =
                2.0 * t * s * (1.0 - s) + 0.2 * (17.0 * j as f64 + 3.0 * i as f64).sin();
            content.push_str(&format!(",{value}"));
        }
        content.push('\n');
    }
    std::fs::write(path, content).unwrap();
}

/// The same data in long `label,s,value` triples.
fn write_long_fixture(wide: &Path, long: &Path) {
    let text = std::fs::read_to_string(wide).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mut out = String::from("label,s,value\n");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        for (i, cell) in cells.iter().enumerate().skip(1) {
            out.push_str(&format!("{},{},{}\n", cells[0], header[i], cell));
        }
    }
    std::fs::write(long, out).unwrap();
}

#[test]
fn wide_and_long_inputs_give_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let wide = dir.path().join("wide.csv");
    let long = dir.path().join("long.csv");
    write_wide_fixture(&wide);
    write_long_fixture(&wide, &long);

    let base = [
        "test", "--delta", "0.2", "--bandwidth", "0.2", "--boot", "200", "--seed", "3",
    ];
    let from_wide = cli()
        .args(base)
        .args(["--input", wide.to_str().unwrap()])
        .output()
        .unwrap();
    let from_long = cli()
        .args(base)
        .args(["--input", long.to_str().unwrap(), "--long"])
        .output()
        .unwrap();
    assert!(from_wide.status.success());
    assert!(from_long.status.success());
    assert_eq!(from_wide.stdout, from_long.stdout);

    let json: serde_json::Value = serde_json::from_slice(&from_wide.stdout).unwrap();
    assert_eq!(json["config"]["n"], 80);
    assert_eq!(json["config"]["benchmark"], "initial");
    assert!(json["d_inf"].as_f64().unwrap() > 0.0);
}

#[test]
fn test_writes_json_to_the_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wide.csv");
    let out = dir.path().join("result.json");
    write_wide_fixture(&input);

    let run = cli()
        .args([
            "test", "--input", input.to_str().unwrap(), "--delta", "0.2", "--bandwidth",
            "0.2", "--boot", "100", "--seed", "3", "--out", out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(run.status.success());
    assert!(run.stdout.is_empty(), "JSON goes to the file, not stdout");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["config"]["delta"], 0.2);
}

#[test]
fn first_time_emits_json_and_the_per_location_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wide.csv");
    let csv = dir.path().join("times.csv");
    write_wide_fixture(&input);

    let run = cli()
        .args([
            "first-time", "--input", input.to_str().unwrap(), "--delta", "0.25",
            "--bandwidth", "0.2", "--delta-n", "0.05", "--csv", csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(run.status.success());
    let json: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert!(json.get("global").is_some());
    assert_eq!(json["per_s"].as_array().unwrap().len(), 9);

    let times = std::fs::read_to_string(&csv).unwrap();
    let mut lines = times.lines();
    assert_eq!(lines.next(), Some("s,t_star"));
    assert_eq!(lines.count(), 9);
}

#[test]
fn surface_prints_the_five_column_export() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wide.csv");
    write_wide_fixture(&input);

    let run = cli()
        .args([
            "surface", "--input", input.to_str().unwrap(), "--bandwidth", "0.2",
        ])
        .output()
        .unwrap();
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,s,mu_tilde,g_hat,deviation"));
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 5);
}

#[test]
fn errors_are_one_line_slugged_and_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wide.csv");
    write_wide_fixture(&input);

    // Unreadable input.
    let missing = cli()
        .args(["test", "--input", "/definitely/not/here.csv", "--delta", "1"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let err = String::from_utf8(missing.stderr).unwrap();
    assert!(err.starts_with("error: io-error: "), "got: {err}");
    assert_eq!(err.trim_end_matches('\n').lines().count(), 1);

    // Invalid statistical configuration reaches the library validator.
    let bad_h = cli()
        .args([
            "test", "--input", input.to_str().unwrap(), "--delta", "1", "--bandwidth",
            "0.7",
        ])
        .output()
        .unwrap();
    assert_eq!(bad_h.status.code(), Some(1));
    let err = String::from_utf8(bad_h.stderr).unwrap();
    assert!(err.starts_with("error: invalid-config: "), "got: {err}");

    // Malformed CSV cell is located by row and column.
    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "label,0,0.5,1\na,1,2,3\nb,4,oops,6\n").unwrap();
    let parse = cli()
        .args(["test", "--input", broken.to_str().unwrap(), "--delta", "1"])
        .output()
        .unwrap();
    assert_eq!(parse.status.code(), Some(1));
    let err = String::from_utf8(parse.stderr).unwrap();
    assert!(err.starts_with("error: parse-error: "), "got: {err}");
    assert!(err.contains("row 2"), "got: {err}");
}

#[test]
fn simulate_rejects_unknown_surface_names() {
    let run = cli()
        .args([
            "simulate", "--mean", "mu9", "--errors", "iid", "--n", "50", "--reps", "2",
            "--deltas", "1",
        ])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2), "clap rejects the enum value");
}
