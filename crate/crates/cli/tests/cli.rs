use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use netlasso_cli::ErrorRecord;

const CONFIG: &str = r#"
schema_version = 1

[generate]
n = 50

[tuning]
first_stage = { rule = "benchmark", c = 2.0 }
second_stage = { rule = "benchmark", c = 2.0 }

[counterfactual]
leaders = ["0", "1", "2"]

[study]
n = 40
replications = 3
tuning = { second_stage = { rule = "benchmark", c = 2.0 } }
"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_netlasso"));
    cmd.env_remove("NETLASSO_OUTPUT_DIR");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
    dir
}

fn pipeline(dir: &Path, tag: &str) -> Vec<PathBuf> {
    let p = |name: &str| format!("{tag}_{name}");
    run(dir, &["generate", "--config", "cfg.toml", "--seed", "5", "--output", &p("net.csv")]);
    run(dir, &["simulate", "--config", "cfg.toml", "--networks", &p("net.csv"), "--seed", "6", "--output", &p("data")]);
    let manifest = format!("{}/manifest.toml", p("data"));
    run(dir, &["fit", "--config", "cfg.toml", "--data", &manifest, "--format", "json", "--output", &p("fit.json")]);
    run(dir, &["fit", "--config", "cfg.toml", "--data", &manifest, "--output", &p("fit.csv")]);
    run(dir, &["infer", "--config", "cfg.toml", "--data", &manifest, "--fit", &p("fit.json"), "--output", &p("infer.csv")]);
    run(dir, &["counterfactual", "--config", "cfg.toml", "--data", &manifest, "--fit", &p("fit.json"), "--output", &p("cf.csv")]);
    ["net.csv", "data/outcomes.csv", "data/covariates.csv", "data/network_0.csv", "fit.json", "fit.csv", "infer.csv", "cf.csv"]
        .iter()
        .map(|f| dir.join(p(f)))
        .collect()
}

#[test]
fn pipeline_completes_and_is_deterministic() {
    let dir = setup();
    let start = Instant::now();
    let first = pipeline(dir.path(), "a");
    assert!(start.elapsed() < Duration::from_secs(60));
    let second = pipeline(dir.path(), "b");
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
    }

    // n node effects plus one covariate
    let infer = std::fs::read_to_string(dir.path().join("a_infer.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(infer.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 50 + 1);
    assert_eq!(rows.iter().filter(|r| &r[0] == "eta").count(), 50);
    assert_eq!(&rows[50][0], "beta");

    let cf = std::fs::read_to_string(dir.path().join("a_cf.csv")).unwrap();
    assert_eq!(cf.lines().count(), 1 + 47);
}

#[test]
fn infer_without_fit_matches_infer_with_fit() {
    let dir = setup();
    pipeline(dir.path(), "a");
    run(dir.path(), &["infer", "--config", "cfg.toml", "--data", "a_data/manifest.toml", "--output", "refit.csv"]);
    assert_eq!(std::fs::read(dir.path().join("refit.csv")).unwrap(), std::fs::read(dir.path().join("a_infer.csv")).unwrap());
}

#[test]
fn json_dataset_matches_manifest_dataset() {
    let dir = setup();
    pipeline(dir.path(), "a");
    run(dir.path(), &["simulate", "--config", "cfg.toml", "--networks", "a_net.csv", "--seed", "6", "--format", "json", "--output", "data.json"]);
    run(dir.path(), &["fit", "--config", "cfg.toml", "--data", "data.json", "--output", "fit_from_json.csv"]);
    assert_eq!(std::fs::read(dir.path().join("fit_from_json.csv")).unwrap(), std::fs::read(dir.path().join("a_fit.csv")).unwrap());
}

#[test]
fn mc_reports_are_deterministic() {
    let dir = setup();
    for name in ["one.json", "two.json"] {
        run(dir.path(), &["mc", "--config", "cfg.toml", "--seed", "11", "--format", "json", "--output", name]);
    }
    let one = std::fs::read(dir.path().join("one.json")).unwrap();
    assert_eq!(one, std::fs::read(dir.path().join("two.json")).unwrap());
    let report = netlasso::montecarlo::report_from_json(std::str::from_utf8(&one).unwrap()).unwrap();
    assert_eq!(report.n, 40);
    assert_eq!(report.replications_ok + report.replication_failures.len(), 3);

    run(dir.path(), &["mc", "--config", "cfg.toml", "--seed", "11", "--output", "one.csv"]);
    let csv_text = std::fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert!(csv_text.starts_with("quantity,n,value"));
}

fn failure(dir: &Path, args: &[&str]) -> (i32, ErrorRecord) {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().unwrap();
    (out.status.code().unwrap(), serde_json::from_str(last).unwrap())
}

#[test]
fn failures_produce_error_records() {
    let dir = setup();
    let (code, rec) = failure(dir.path(), &["fit", "--data", "x.toml", "--frobnicate"]);
    assert_eq!((code, rec.error.kind.as_str()), (2, "usage"));
    assert!(rec.error.message.contains("--frobnicate"));

    std::fs::write(dir.path().join("bad.toml"), "schema_version = 1\n\n[inference]\nlevel = 0.9\nfdr = 0.1\n").unwrap();
    let (code, rec) = failure(dir.path(), &["mc", "--config", "bad.toml"]);
    assert_eq!((code, rec.error.kind.as_str()), (2, "config"));
    assert!(rec.error.message.contains("line 5"), "{}", rec.error.message);

    std::fs::write(dir.path().join("old.toml"), "schema_version = 7\n").unwrap();
    let (_, rec) = failure(dir.path(), &["mc", "--config", "old.toml"]);
    assert!(rec.error.message.contains("schema_version 7"));

    std::fs::write(dir.path().join("none.toml"), "[study]\nn = 10\n").unwrap();
    let (_, rec) = failure(dir.path(), &["mc", "--config", "none.toml"]);
    assert!(rec.error.message.contains("schema_version"));

    let (code, rec) = failure(dir.path(), &["fit", "--data", "missing/manifest.toml"]);
    assert_eq!((code, rec.error.kind.as_str()), (1, "io"));
}

#[test]
fn output_directory_from_environment() {
    let dir = setup();
    let out_dir = dir.path().join("results");
    let status = bin()
        .current_dir(dir.path())
        .env("NETLASSO_OUTPUT_DIR", &out_dir)
        .args(["generate", "--config", "cfg.toml", "--format", "json"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out_dir.join("generate.json")).unwrap();
    let nets: netlasso_cli::commands::NetworksFile = serde_json::from_str(&text).unwrap();
    assert_eq!(nets.n, 50);

    // an explicit --output wins
    let status = bin()
        .current_dir(dir.path())
        .env("NETLASSO_OUTPUT_DIR", &out_dir)
        .args(["generate", "--config", "cfg.toml", "--output", "here.csv"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("here.csv").exists());
}
