use std::process::{Command, Output};

fn vortex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vortex")).args(args).output().expect("run vortex")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn analyze_prints_json_report() {
    let o = vortex(&["analyze", "--scenario", "triangle-center", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], "CertifiedStable");
    assert_eq!(v["fixed_point"].as_array().unwrap().len(), 9);
    assert_eq!(v["reference"]["minors"].as_array().unwrap().len(), 4);
}

#[test]
fn unstable_verdict_still_exits_zero() {
    let o = vortex(&["analyze", "--scenario", "square-center", "--gamma", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"LinearlyUnstable\""));
    let o = vortex(&["analyze", "--scenario", "equilateral3", "--circulations", "1,1,-1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"LinearlyUnstable\""));
}

#[test]
fn analyze_writes_file_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = vortex(&[
            "analyze",
            "--scenario",
            "square-center",
            "--gamma",
            "1",
            "--t-end",
            "1",
            "--dt",
            "0.01",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("CertifiedStable"));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let v: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    assert!(v["drift"]["max_deviation"].as_f64().unwrap() < 1e-2);
}

#[test]
fn invalid_scenarios_exit_two() {
    for args in [
        &["analyze", "--scenario", "hexagon", "--gamma", "1"][..],
        &["analyze", "--scenario", "triangle-center", "--gamma", "0"],
        &["analyze", "--scenario", "triangle-center"],
        &["analyze", "--gamma", "1"],
        &["sweep", "--scenario", "custom", "--from", "0", "--to", "1", "--step", "0.5"],
        &["sweep", "--scenario", "square-center", "--from", "0", "--to", "1", "--step", "0"],
    ] {
        let o = vortex(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn custom_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"positions": [[1, 0], [0, 1], [-1, 0], [0, -1], [0, 0]], "circulations": [1, 1, 1, 1, 1]}"#,
    )
    .unwrap();
    let o = vortex(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("CertifiedStable"));

    std::fs::write(&cfg, r#"{"positions": [[0, 0], [1, 0], [0.3, 2]], "circulations": [1, 2, 3]}"#).unwrap();
    let o = vortex(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a fixed point"));

    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(vortex(&["analyze", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sweep_csv_rows_match_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = vortex(&[
        "sweep",
        "--scenario",
        "square-center",
        "--from",
        "-1",
        "--to",
        "3",
        "--step",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // 9 grid points, gamma = 0 skipped
    assert_eq!(lines.len(), 1 + 8);
    assert_eq!(lines[0], "gamma,verdict,max_re_lambda,d1,d2,d3,d4,d5,d6,error");
    assert!(lines.iter().any(|l| l.starts_with("1,CertifiedStable")));
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped"));

    let o = vortex(&["sweep", "--scenario", "square-center", "--from", "1", "--to", "0", "--step", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn sequential_sweep_matches_parallel() {
    let args = ["sweep", "--scenario", "triangle-center", "--from", "-1", "--to", "2", "--step", "0.25"];
    let a = vortex(&args);
    let mut seq = args.to_vec();
    seq.push("--sequential");
    let b = vortex(&seq);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn integrate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = vortex(&[
        "integrate",
        "--scenario",
        "triangle-center",
        "--gamma",
        "0.5",
        "--t-end",
        "0.1",
        "--dt",
        "0.01",
        "--perturb",
        "1e-4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 11);
    assert!(text.starts_with("t,coord_0,"));
}

#[test]
fn numerical_failure_exits_three() {
    let o = vortex(&[
        "integrate",
        "--scenario",
        "square-center",
        "--gamma",
        "1",
        "--t-end",
        "400",
        "--dt",
        "100",
        "--perturb",
        "0.3",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stopped early"));
}

#[test]
fn reference_suite_passes() {
    let o = vortex(&["check", "--suite", "paper"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 11);
}
