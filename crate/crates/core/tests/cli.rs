use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spectral_tv::eigen::make_box_1d;
use spectral_tv::io::{read_signal, write_signal};
use spectral_tv::signal::relative_error;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectral-tv"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
        .parse()
        .unwrap()
}

#[test]
fn eigen_box_prints_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["eigen", "--box1d", "n=256", "w=20", "h=1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!((value(&text, "lambda") - 0.1).abs() < 1e-12);
    assert!(value(&text, "residual") < 1e-3);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["flow", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = cli(dir.path(), &["eigen", "--box1d", "n=256", "w=20", "q=1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cli(dir.path(), &["eigen", "--box1d", "n=16", "w=20"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cli(dir.path(), &["measures", "missing.csv", "missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cli(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn identical_inputs_have_zero_measures() {
    let dir = tempfile::tempdir().unwrap();
    let f = make_box_1d(64, 10, 1.0).unwrap().signal;
    write_signal(&dir.path().join("a.csv"), &f).unwrap();
    let o = cli(dir.path(), &["measures", "a.csv", "a.csv", "--out", "m"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    assert!(value(&text, "orth_O").abs() < 1e-9);
    assert!(value(&text, "lis_L").abs() < 1e-9);
    let csv = fs::read_to_string(dir.path().join("m/measures.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(dir.path().join("m/measures.manifest.json").exists());
}

#[test]
fn flow_transform_filter_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let f = make_box_1d(128, 12, 1.0).unwrap().signal.shifted(0.25);
    write_signal(&dir.path().join("f.csv"), &f).unwrap();
    let run = |args: &[&str]| {
        let o = cli(dir.path(), args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        stdout(&o)
    };
    let text = run(&["flow", "f.csv", "--dt", "0.5"]);
    assert!((value(&text, "extinction_time") - 1.0 / 0.1666).abs() < 1.0);
    run(&["transform", "out/trajectory", "--mark", "6"]);
    for name in [
        "spectrum.csv",
        "spectrum.svg",
        "bands/bands.json",
        "flow.manifest.json",
    ] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
    run(&[
        "filter",
        "out/bands",
        "--lowpass",
        "3",
        "--output",
        "low.csv",
    ]);
    run(&[
        "filter",
        "out/bands",
        "--highpass",
        "3",
        "--output",
        "high.csv",
    ]);
    let low = read_signal(&dir.path().join("low.csv")).unwrap();
    let high = read_signal(&dir.path().join("high.csv")).unwrap();
    assert!(relative_error(&low.add(&high).unwrap(), &f).unwrap() < 1e-12);
    // the box is a single scale, above the cutoff
    assert!(relative_error(&low, &f).unwrap() < 1e-3);

    let o = cli(dir.path(), &["filter", "out/bands", "--bandpass", "5,2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn strict_flags_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let f = make_box_1d(64, 8, 1.0).unwrap().signal;
    write_signal(&dir.path().join("f.csv"), &f).unwrap();
    let args = [
        "flow",
        "f.csv",
        "--dt",
        "0.5",
        "--t-max",
        "2",
        "--prox-max-iter",
        "2",
    ];
    let o = cli(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("warning"));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(cli(dir.path(), &strict).status.code(), Some(2));
}

#[test]
fn boxes_experiment_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "experiment",
        "boxes1d",
        "--n",
        "128",
        "--w",
        "10",
        "--distances",
        "0:20:100",
    ];
    let o = cli(dir.path(), &args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("d,overlapping,additivity_defect,"));
    assert_eq!(lines.count(), 6);
    let svg = fs::read_to_string(dir.path().join("out/curve.svg")).unwrap();
    assert!(svg.contains(">O</text>") && svg.contains(">L</text>"));
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/experiment_boxes1d.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["sweep"]["n"], 128);
    assert!(manifest["functional"]["prox_tol"].as_f64().is_some());
}
