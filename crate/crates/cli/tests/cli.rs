use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn msq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msq"))
        .args(args)
        .env_remove("MSQ_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn construct_order4() {
    let out = msq(&["construct", "--n", "4", "--k", "1", "--starts", "1,5,9,13"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["magic_sum"], 34);
    let mut entries: Vec<i64> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_i64().unwrap()))
        .collect();
    entries.sort_unstable();
    assert_eq!(entries, (1..=16).collect::<Vec<_>>());
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1 2 3\n4 5 6\n7 8 9\n").unwrap();
    assert_eq!(
        msq(&["validate", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let good = dir.path().join("good.json");
    fs::write(&good, "[[2,7,6],[9,5,1],[4,3,8]]").unwrap();
    assert_eq!(
        msq(&["validate", good.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let ragged = dir.path().join("ragged.txt");
    fs::write(&ragged, "1 2\n3\n").unwrap();
    assert_eq!(
        msq(&["validate", ragged.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(msq(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(msq(&["construct", "--bogus"]).status.code(), Some(64));
    assert_eq!(msq(&["--help"]).status.code(), Some(0));
}

#[test]
fn spectrum_preset_is_reproducible() {
    let a = msq(&["spectrum", "--fig-qftshots", "--shots", "40", "--seed", "7"]);
    let b = msq(&["spectrum", "--fig-qftshots", "--shots", "40", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stderr).contains("seed=7"));
    let csv = String::from_utf8(a.stdout).unwrap();
    assert!(csv.starts_with("k,count\n"));
    let total: u64 = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 40);
}

#[test]
fn seed_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_msq"))
        .args(["recover", "--fig-autocorr"])
        .env("MSQ_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(json(&out)["seed"], 11);
}

#[test]
fn genset_then_detect() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.bin");
    let p = path.to_str().unwrap();
    let out = msq(&[
        "genset",
        "--q",
        "7",
        "--n",
        "4",
        "--k",
        "3",
        "--starts",
        "2,30,61,100",
        "--out",
        p,
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["marked"], 16);
    let out = msq(&["detect", "--set", p, "--n", "4", "--reps", "5,33,64,103"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["outcome"], "solution");
    assert_eq!(v["k"], 3);
}

#[test]
fn detect_nothing_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sparse.bin");
    let p = path.to_str().unwrap();
    // a single progression cannot fill four
    msq(&[
        "genset", "--q", "6", "--n", "1", "--k", "3", "--starts", "5", "--out", p,
    ]);
    let out = msq(&["detect", "--set", p, "--n", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["outcome"], "none-of-form");
}

#[test]
fn recover_and_autocorr_presets() {
    let v = json(&msq(&["recover", "--fig-autocorr", "--seed", "1"]));
    assert_eq!(v["spacing"], 25);
    let out = msq(&["autocorr", "--fig-autocorr", "--s-min", "0", "--s-max", "4"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("s,value\n0,"));
    assert_eq!(csv.lines().count(), 6);
    let v = json(&msq(&["autocorr", "--fig-autocorr", "--trace", "23"]));
    assert!(v["center"].is_i64());
}

#[test]
fn bound_and_search() {
    let v = json(&msq(&[
        "bound",
        "--z",
        "3",
        "--horizon",
        "1000",
        "--search-cap",
        "27",
    ]));
    assert_eq!(v["t0"], 2);
    assert_eq!(v["u"], "27");
    assert_eq!(v["squares"].as_array().unwrap().len(), 0);
}

#[test]
fn certify_empty_set() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.bin");
    let p = path.to_str().unwrap();
    msq(&[
        "genset", "--q", "5", "--n", "1", "--k", "1", "--starts", "3", "--out", p,
    ]);
    let out = msq(&["certify", "--set", p, "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["verdict"], "absent");
}

#[test]
fn protocol_demo_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let out = msq(&[
        "protocol-demo",
        "--seed",
        "3",
        "--transcript",
        t.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["square_matches_secret"], true);
    assert_eq!(v["bits_match"], true);
    let lines = fs::read_to_string(&t).unwrap();
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["tag"], "REPRESENTATIVES");
}
