use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bsde-lab"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), r#"{"command": "solve"}"#, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("seed required"));
}

#[test]
fn seed_flag_fills_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        r#"{"command": "validate", "generator": {"preset": "zero"}}"#,
        &["--seed", "4"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn unknown_preset_and_malformed_config_are_distinguished() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(
        dir.path(),
        r#"{"command": "solve", "seed": 1, "generator": {"preset": "nope"}}"#,
        &[],
    );
    let b = run(dir.path(), r#"{"command": "#, &[]);
    let c = run(
        dir.path(),
        r#"{"command": "solve", "seed": 1, "bogus_field": 2}"#,
        &[],
    );
    assert_eq!(a.status.code(), Some(3));
    assert_eq!(b.status.code(), Some(3));
    assert_eq!(c.status.code(), Some(3));
    assert!(stderr(&a).contains("unknown generator preset"));
    assert!(stderr(&b).contains("malformed config"));
    assert!(stderr(&c).contains("bogus_field"));
}

#[test]
fn usage_errors_exit_3_and_help_exits_0() {
    let bin = env!("CARGO_BIN_EXE_bsde-lab");
    assert_eq!(
        Command::new(bin)
            .arg("--bogus")
            .output()
            .unwrap()
            .status
            .code(),
        Some(3)
    );
    assert_eq!(Command::new(bin).output().unwrap().status.code(), Some(3));
    assert_eq!(
        Command::new(bin)
            .arg("--help")
            .output()
            .unwrap()
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn approx_square_gap_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        r#"{"command": "approx", "seed": 5, "approx": {"n_points": 11, "n_schedule": [1, 2, 4, 8]}}"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/approx.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (cn, cx, cgap) = (col("n"), col("x"), col("gap"));
    let mut rows = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let n: f64 = f[cn].parse().unwrap();
        let x: f64 = f[cx].parse().unwrap();
        let gap: f64 = f[cgap].parse().unwrap();
        assert!(
            (gap - x * x / (2.0 * n + 1.0)).abs() < 1e-6,
            "n={n} x={x} gap={gap}"
        );
        rows += 1;
    }
    assert_eq!(rows, 44);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/approx.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["seed"], 5);
    assert_eq!(json["report"]["verdict"], "pass");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let cfg = r#"{"command": "solve", "seed": 11, "n_paths": 2048, "generator": {"preset": "mixed"},
        "terminal": {"kind": "clipped_brownian", "low": -1.0, "high": 1.0}}"#;
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("config.json");
        std::fs::write(&cfg_path, cfg).unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_bsde-lab"))
            .env("BSDE_LAB_THREADS", threads)
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out-dir")
            .arg(dir.path())
            .arg("--quiet")
            .output()
            .unwrap();
        assert!(o.status.code().unwrap() <= 2, "{}", stderr(&o));
        outputs.push((
            std::fs::read(dir.path().join("solve.csv")).unwrap(),
            std::fs::read(dir.path().join("solve.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}
