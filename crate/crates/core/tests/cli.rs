use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stopsum::report::{parse_csv_report, parse_json_report, Check, Verdict};

fn stopsum(dir: &Path, args: &[&str], workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stopsum"))
        .current_dir(dir)
        .env("STOPSUM_WORKERS", workers)
        .args(args)
        .output()
        .expect("binary runs")
}

const MINIMAL: &[&str] = &[
    "--model",
    "iid_bounded",
    "--n-list",
    "64",
    "--reps",
    "10000",
    "--checks",
    "distance",
];

#[test]
fn minimal_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = stopsum(dir.path(), &[MINIMAL, &["--out", "r.csv"]].concat(), "1");
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let recs = parse_csv_report(&fs::read(dir.path().join("r.csv")).unwrap()).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].check, Check::Distance);
    assert_eq!(recs[0].verdict, Verdict::Pass);
    assert_eq!(recs[0].model, "iid_bounded:m=1,v=1");
    for side in ["r.bounds.csv", "r.ecdf.csv"] {
        assert!(dir.path().join(side).exists(), "{side}");
    }
}

#[test]
fn reruns_are_byte_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| -> Vec<&str> {
        vec![
            "--model",
            "product:a_lo=1,a_hi=2,jump_prob=0.05",
            "--n-list",
            "64,128",
            "--reps",
            "10000",
            "--seed",
            "99",
            "--checks",
            "distance,cf,lemma1,esseen",
            "--out",
            out,
        ]
    };
    assert_eq!(
        stopsum(dir.path(), &args("a.json"), "1").status.code(),
        Some(0)
    );
    assert_eq!(
        stopsum(dir.path(), &args("b.json"), "3").status.code(),
        Some(0)
    );
    for suffix in [".json", ".bounds.csv", ".cf.csv", ".ecdf.csv"] {
        let a = fs::read(dir.path().join(format!("a{suffix}"))).unwrap();
        let b = fs::read(dir.path().join(format!("b{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
    let recs = parse_json_report(&fs::read(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(recs.len(), 8);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "model = \"regime_switch:v_lo=0.25,v_hi=4\"\nn_list = [64]\nreps = 10000\nseed = 3\nchecks = [\"distance\"]\nout = \"from_file.csv\"\n",
    )
    .unwrap();
    let out = stopsum(
        dir.path(),
        &["--config", "exp.toml", "--out", "flag.csv"],
        "1",
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("flag.csv").exists());
    assert!(!dir.path().join("from_file.csv").exists());
}

#[test]
fn invalid_level_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = stopsum(
        dir.path(),
        &["--model", "iid_bounded", "--n-list", "1"],
        "1",
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("below 2 * sigma^2_0"));
    assert!(!dir.path().join("report.csv").exists());
}

#[test]
fn bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["--n-list", "64,32"][..],
        &["--n-list", "64", "--checks", "distance,bogus"],
        &["--n-list", "64", "--format", "xml"],
        &["--config", "missing.toml"],
    ] {
        assert_eq!(
            stopsum(dir.path(), args, "1").status.code(),
            Some(2),
            "{args:?}"
        );
    }
    assert_eq!(
        stopsum(dir.path(), &["--n-list", "64"], "zero")
            .status
            .code(),
        Some(2)
    );
}
