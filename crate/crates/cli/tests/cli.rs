use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn invgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn forward_cooperative_has_default_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = invgame(&["forward", "--system", "ball-on-beam", "--concept", "cg", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&dir.path().join("trajectory.csv")), 251);
    let report = json(&dir.path().join("forward.json"));
    assert_eq!(report["report"]["converged"], true);
    assert_eq!(report["config"]["horizon"], 251);
}

#[test]
fn missing_system_is_a_usage_error() {
    let o = invgame(&["forward", "--concept", "cg", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--system"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(invgame(&["forward", "--bogus"]).status.code(), Some(2));
}

#[test]
fn nonlinear_feedback_nash_is_rejected() {
    let o = invgame(&["forward", "--system", "ball-on-beam", "--concept", "fb-nash", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("only available for linear-quadratic systems"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"seed": 5, "horizon": 60}"#).unwrap();
    let out = dir.path().join("out");
    let o = invgame(&[
        "forward",
        "--system",
        "ball-on-beam-lq",
        "--concept",
        "ol-nash",
        "--config",
        config.to_str().unwrap(),
        "--horizon",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&out.join("forward.json"));
    assert_eq!(report["config"]["horizon"], 40);
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["config"]["dt"], 0.02);
    assert_eq!(data_rows(&out.join("trajectory.csv")), 40);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = invgame(&[
        "forward",
        "--system",
        "ball-on-beam-lq",
        "--concept",
        "fb-nash",
        "--horizon",
        "50",
        "--snr",
        "20",
        "--seed",
        "9",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = dir.path().join("echo.json");
    fs::write(&echoed, json(&first.join("forward.json"))["config"].to_string()).unwrap();
    let second = dir.path().join("second");
    let o = invgame(&[
        "forward",
        "--config",
        echoed.to_str().unwrap(),
        "--snr",
        "20",
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["trajectory.csv", "trajectory_snr20.csv"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn identify_cooperative_reports_stacked_and_split_weights() {
    let dir = tempfile::tempdir().unwrap();
    let demo_dir = dir.path().join("demo");
    let o = invgame(&[
        "forward",
        "--system",
        "ball-on-beam",
        "--concept",
        "cg",
        "--out",
        demo_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("id");
    let o = invgame(&[
        "identify",
        "--system",
        "ball-on-beam",
        "--concept",
        "cg",
        "--demo",
        demo_dir.join("trajectory.csv").to_str().unwrap(),
        "--fix-weight",
        "player=1,index=5,value=2.0",
        "--fix-weight",
        "player=2,index=5,value=1.0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let result = json(&out.join("identification.json"));
    assert_eq!(result["stacked"].as_array().unwrap().len(), 10);
    let theta = result["theta"].as_array().unwrap();
    assert_eq!(theta.len(), 2);
    assert_eq!(theta[0][4], 2.0);
    assert_eq!(theta[1][4], 1.0);
    let joint = json(&out.join("identification_joint.json"));
    assert_eq!(
        joint["result"]["fixed"][0],
        serde_json::json!({"player": 1, "index": 5, "value": 2.0})
    );
}

#[test]
fn corrupt_demonstration_names_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "k,t,x1,x2,x3,x4,u1\n1,0,0.5,0,0,0,1\n").unwrap();
    let o = invgame(&[
        "identify",
        "--system",
        "ball-on-beam-lq",
        "--concept",
        "ol-nash",
        "--demo",
        csv.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 1, column 8") && err.contains("u2"), "{err}");
}

#[test]
fn nonconvergence_is_a_numerical_failure_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo");
    let o = invgame(&[
        "forward",
        "--system",
        "ball-on-beam-lq",
        "--concept",
        "ol-nash",
        "--horizon",
        "60",
        "--out",
        demo.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"max_iterations": 1}"#).unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec![
            "identify",
            "--system",
            "ball-on-beam-lq",
            "--concept",
            "ol-nash",
            "--config",
            config.to_str().unwrap(),
        ];
        let demo_csv = demo.join("trajectory.csv");
        let out = dir.path().join("out");
        let (demo_csv, out) = (demo_csv.to_str().unwrap().to_owned(), out.to_str().unwrap().to_owned());
        args.extend(["--demo", &demo_csv, "--out", &out]);
        args.extend(extra);
        invgame(&args)
    };
    let strict = run(&[]);
    assert_eq!(strict.status.code(), Some(3), "{}", stderr(&strict));
    assert!(stderr(&strict).contains("--allow-nonconverged"));
    let lenient = run(&["--allow-nonconverged"]);
    assert!(lenient.status.success(), "{}", stderr(&lenient));
    assert_eq!(json(&dir.path().join("out/identification.json"))["converged"], false);
}

#[test]
fn evaluate_compares_with_the_demonstration() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo");
    let o = invgame(&[
        "forward",
        "--system",
        "ball-on-beam-lq",
        "--concept",
        "ol-nash",
        "--out",
        demo.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let params = dir.path().join("truth.json");
    fs::write(&params, r#"{"theta": [[20, 1, 1, 1, 2], [1, 1, 10, 1, 1]]}"#).unwrap();
    let out = dir.path().join("eval");
    let o = invgame(&[
        "evaluate",
        "--system",
        "ball-on-beam-lq",
        "--concept",
        "ol-nash",
        "--demo",
        demo.join("trajectory.csv").to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&out.join("evaluation.json"));
    assert!(report["errors"]["e_x"].as_f64().unwrap() < 1e-12);
    assert!(report["errors"]["e_u"].as_f64().unwrap() < 1e-12);
}

#[test]
fn reproduce_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = invgame(&["reproduce-paper", "--only", "cg", "--snr", "inf", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let grid = fs::read_to_string(dir.path().join("nmae_grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "pipeline,inf");
    assert!(lines[1].starts_with("CG,"));
    assert!(dir.path().join("params_cg.json").exists());

    let summary = json(&dir.path().join("summary.json"));
    let fb = summary["summary"]["reference_errors"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["pipeline"] == "FB")
        .unwrap()
        .clone();
    assert_eq!(fb["e_x"][4], 0.013);
    assert_eq!(summary["config"]["snr"], serde_json::json!(["inf"]));
}

#[test]
fn unknown_pipeline_is_rejected() {
    let o = invgame(&["reproduce-paper", "--only", "xyz", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
}
