use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_stackcast");

fn stackcast(dir: &Path, args: &[&str], log: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir).args(args).env_remove("STACKCAST_LOG");
    if let Some(level) = log {
        cmd.env("STACKCAST_LOG", level);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth(dir: &Path, n: &str) {
    let out = stackcast(
        dir,
        &[
            "synth",
            "--kind",
            "sine_noise",
            "--n",
            n,
            "--seed",
            "4",
            "--output",
            "s.csv",
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

const CONFIG: &str = r#"{
    "input": "s.csv",
    "output_dir": "out",
    "window": 10,
    "models": ["naive", "ann", "lstm", "stack"],
    "overrides": {"ann": {"epochs": 2}, "lstm": {"epochs": 2, "hidden_size": 4}}
}"#;

#[test]
fn synth_clean_run_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "150");

    let out = stackcast(d, &["clean", "--input", "s.csv", "--output", "c.csv"], None);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    assert_eq!(
        fs::read(d.join("c.csv")).unwrap(),
        fs::read(d.join("s.csv")).unwrap()
    );

    fs::write(d.join("cfg.json"), CONFIG).unwrap();
    let out = stackcast(
        d,
        &["run", "--config", "cfg.json", "--seed", "9"],
        Some("error"),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty() && out.stderr.is_empty());
    let report = fs::read_to_string(d.join("out/report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["seed"], 9);

    let out = stackcast(
        d,
        &[
            "predict",
            "--model",
            "out/models/stack.json",
            "--input",
            "c.csv",
            "--output",
            "p.csv",
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(d.join("p.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("date,actual,predicted"));
    assert_eq!(text.lines().count(), 1 + 150 - 10);
}

#[test]
fn dash_output_goes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = stackcast(
        dir.path(),
        &[
            "synth",
            "--kind",
            "random_walk",
            "--n",
            "60",
            "--output",
            "-",
        ],
        None,
    );
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert!(text.starts_with("symbol,date,open,high,low,close,volume\n"));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn validation_errors_exit_one_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "100");

    let bad_configs = [
        r#"{"input": "s.csv", "output_dir": "out", "window": 0}"#,
        r#"{"input": "s.csv", "output_dir": "out", "windw": 5}"#,
        r#"{"input": "s.csv", "output_dir": "out", "window": 99}"#,
        r#"{"input": "missing.csv", "output_dir": "out"}"#,
        r#"{"input": "s.csv", "output_dir": "out", "models": ["naive"], "overrides": {"ann": {"epochs": 1}}}"#,
        "not json",
    ];
    for cfg in bad_configs {
        fs::write(d.join("cfg.json"), cfg).unwrap();
        let out = stackcast(d, &["run", "--config", "cfg.json"], None);
        assert_eq!(
            code(&out),
            1,
            "{cfg}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!d.join("out").exists(), "{cfg}");
        assert!(!out.stderr.is_empty());
    }

    for args in [
        &["synth", "--kind", "sine", "--n", "100", "--output", "x.csv"][..],
        &[
            "synth",
            "--kind",
            "sine_noise",
            "--n",
            "20",
            "--output",
            "x.csv",
        ],
        &["clean", "--input", "s.csv"],
        &[
            "predict", "--model", "s.csv", "--input", "s.csv", "--output", "x.csv",
        ],
        &["frobnicate"],
    ] {
        let out = stackcast(d, args, None);
        assert_eq!(code(&out), 1, "{args:?}");
        assert!(!d.join("x.csv").exists());
    }

    let out = stackcast(
        d,
        &["clean", "--input", "s.csv", "--output", "-"],
        Some("verbose"),
    );
    assert_eq!(code(&out), 1);
    assert!(out.stdout.is_empty());
}

#[test]
fn write_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = stackcast(
        dir.path(),
        &[
            "synth",
            "--kind",
            "ar1_trend",
            "--n",
            "80",
            "--output",
            "no/such/dir/x.csv",
        ],
        None,
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn log_level_controls_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "synth",
        "--kind",
        "sine_noise",
        "--n",
        "60",
        "--output",
        "s.csv",
    ];
    let quiet = stackcast(dir.path(), &args, Some("error"));
    let chatty = stackcast(dir.path(), &args, Some("info"));
    assert!(quiet.stderr.is_empty());
    assert!(!chatty.stderr.is_empty());

    let help = stackcast(dir.path(), &["--help"], None);
    assert_eq!(code(&help), 0);
}
