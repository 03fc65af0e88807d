use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bullets(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bullets")).args(args).env_remove("BULLETS_MAX_N").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn dist_prints_exact_mass_with_manifest() {
    let out = bullets(&["dist", "--n", "4", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["mass"]["0"], "3/8");
    assert_eq!(v["result"]["mass"]["2"], "7/12");
    assert_eq!(v["result"]["mass"]["4"], "1/24");
    assert_eq!(v["manifest"]["subcommand"], "dist");
    assert_eq!(v["manifest"]["seed"], 5);
    assert!(v["manifest"]["version"].is_string());
}

#[test]
fn csv_goes_to_stdout_and_manifest_to_stderr() {
    let out = bullets(&["dist", "--n", "3", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "k,probability");
    assert!(rows.contains(&"1,5/6") && rows.contains(&"3,1/6"), "{rows:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"subcommand\": \"dist\""));
}

#[test]
fn help_and_version_exit_zero() {
    let help = bullets(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("enumerate"));
    assert_eq!(bullets(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bullets(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bullets(&["simulate", "--model", "warp", "--n", "4"]).status.code(), Some(1));
    assert_eq!(bullets(&["dist", "--n", "4", "--jobs", "0"]).status.code(), Some(1));
}

#[test]
fn invalid_parameter_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let tied = write(dir.path(), "tied.json", r#"{"speeds":["1","1"],"delays":["1"]}"#);
    let out = bullets(&["analyze", "--params", &tied]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn singular_parameter_exits_three_with_pattern_report() {
    let dir = tempfile::tempdir().unwrap();
    // Some configuration of this parameter has a triple collision.
    let singular = write(dir.path(), "singular.json", r#"{"speeds":["1","2","3"],"delays":["1","1/3"]}"#);
    let out = bullets(&["enumerate", "--params", &singular]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["result"]["generic"], false);
    assert!(v["result"]["pattern_count"].as_u64().unwrap() >= 1);
    assert_eq!(v["manifest"]["parameter_hash"].as_str().unwrap().len(), 64);

    let analyzed = bullets(&["analyze", "--params", &singular]);
    assert_eq!(analyzed.status.code(), Some(0));
    assert_eq!(json(&analyzed)["result"]["generic"], false);
}

#[test]
fn enumerate_matches_exact_law() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.json", r#"{"speeds":["1/3","1/2","7/5","2"],"delays":["1","13/8","5/7"]}"#);
    let out = bullets(&["enumerate", "--params", &p]);
    assert_eq!(out.status.code(), Some(0));
    let counts = &json(&out)["result"]["counts"];
    // 4! * 3! = 144 configurations; q_4 = (3/8, 7/12, 1/24).
    assert_eq!(counts["0"], 54);
    assert_eq!(counts["2"], 84);
    assert_eq!(counts["4"], 6);
}

#[test]
fn size_bound_honours_flag_and_environment() {
    assert_eq!(bullets(&["dist", "--n", "50", "--max-n", "10"]).status.code(), Some(1));
    let env = Command::new(env!("CARGO_BIN_EXE_bullets"))
        .args(["dist", "--n", "50"])
        .env("BULLETS_MAX_N", "10")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(1));
    let flag_wins = Command::new(env!("CARGO_BIN_EXE_bullets"))
        .args(["dist", "--n", "50", "--max-n", "60"])
        .env("BULLETS_MAX_N", "10")
        .output()
        .unwrap();
    assert_eq!(flag_wins.status.code(), Some(0));
}

#[test]
fn verify_passing_suite_exits_zero() {
    let out = bullets(&["verify", "--suite", "qn"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["passed"], true);
    assert!(!v["result"]["checks"].as_array().unwrap().is_empty());
}

#[test]
fn out_writes_payload_and_manifest_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("dist.csv");
    let out = bullets(&["dist", "--n", "2", "--format", "csv", "--out", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&file).unwrap(), "k,probability\n0,1/2\n2,1/2\n");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("dist.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "dist");
}

#[test]
fn seeded_runs_are_reproducible_across_jobs() {
    for args in [
        vec!["simulate", "--model", "rr", "--n", "6", "--samples", "5000"],
        vec!["alt", "--model", "flock", "--n", "12", "--samples", "5000"],
        vec!["alt", "--model", "destruction", "--x", "0.7", "--samples", "5000"],
    ] {
        let runs: Vec<Value> = ["1", "3"]
            .iter()
            .map(|jobs| {
                let mut a = args.clone();
                a.extend(["--seed", "99", "--jobs", jobs]);
                let out = bullets(&a);
                assert_eq!(out.status.code(), Some(0), "{a:?}");
                json(&out)["result"].clone()
            })
            .collect();
        assert_eq!(runs[0], runs[1], "{args:?}");
    }
    let a = json(&bullets(&["simulate", "--model", "ru", "--n", "6", "--samples", "2000", "--seed", "1"]));
    let b = json(&bullets(&["simulate", "--model", "ru", "--n", "6", "--samples", "2000", "--seed", "2"]));
    assert_ne!(a["result"]["counts"], b["result"]["counts"]);
}

#[test]
fn trajectory_from_file_follows_shot_order() {
    let dir = tempfile::tempdir().unwrap();
    // Slow bullet first, then a faster one catches it; the third escapes.
    let p = write(dir.path(), "t.json", r#"{"speeds":["1","2","3"],"delays":["1","5"]}"#);
    let out = bullets(&["trajectory", "--params", &p, "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["sizes"], serde_json::json!([1, 0, 1]));
}
