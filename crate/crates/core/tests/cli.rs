// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cktchan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cktchan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const TINY: &str = r#"{"params":{"n":10,"p":0.2,"r":0.5,"rate":0.3,"rho":0.5},
  "strategy":"oblivious","seed":3,"trials":200}"#;

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&cktchan(&["frobnicate"])), 2);
    assert_eq!(code(&cktchan(&["simulate"])), 2);
    assert_eq!(code(&cktchan(&["verify", "--suite", "nope"])), 2);
    assert_eq!(code(&cktchan(&["bounds", "--r", "1.5"])), 2);
    assert_eq!(code(&cktchan(&["--help"])), 0);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"params":{"n":10},"strategy":"oblivious"}"#);
    assert_eq!(code(&cktchan(&["simulate", "--config", &cfg])), 2);
    let unknown = write(dir.path(), "unk.json", &TINY.replace("\"trials\"", "\"bogus\":1,\"trials\""));
    assert_eq!(code(&cktchan(&["simulate", "--config", &unknown])), 2);
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = cktchan(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timing"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# cktchan "));
    assert_eq!(lines.next().unwrap(), "# seed 3");
    assert!(lines.next().unwrap().starts_with("# config_sha256 "));
    assert!(lines.next().unwrap().starts_with("n,R,rho,p,r,mode,strategy,seed"));
    assert_eq!(lines.count(), 1);
}

#[test]
fn seed_override_changes_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY);
    let o = cktchan(&["simulate", "--config", &cfg, "--seed", "9", "--no-timing"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("# seed 9"));
}

#[test]
fn exact_pe_writes_a_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "e.json",
        r#"{"params":{"n":8,"p":0.125,"r":0.5,"rate":0.25,"rho":0.5},
           "strategy":"oblivious","seed":1,"trials":1,
           "family":["identity","constant"],"error_rule":"worst_case"}"#,
    );
    let o = cktchan(&["exact-pe", "--config", &cfg, "--no-timing"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let exact = v["result"]["exact"].as_str().or(v["exact"].as_str()).expect("exact field");
    assert!(exact.contains('/'));
    assert!(v["header"].is_object());
}

#[test]
fn gen_then_eval_and_partition() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("p.net");
    let o = cktchan(&["gen", "circuit", "--kind", "projection", "--n", "4", "--indices", "1,3", "--out", net.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = cktchan(&["circuit", "eval", "--file", net.to_str().unwrap(), "--input", "1011"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "11");
    let o = cktchan(&["circuit", "partition", "--file", net.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains('4'));
    let o = cktchan(&["circuit", "eval", "--file", net.to_str().unwrap(), "--input", "10"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn generated_codebook_feeds_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let book = dir.path().join("book.txt");
    let o = cktchan(&["gen", "codebook", "--n", "10", "--rho", "0.5", "--rate", "0.3", "--seed", "4", "--out", book.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = TINY.replace("\"trials\"", &format!("\"codebook_file\":{:?},\"trials\"", book.to_str().unwrap()));
    let cfg = write(dir.path(), "c.json", &cfg);
    let o = cktchan(&["simulate", "--config", &cfg, "--no-timing"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_identity_passes() {
    let o = cktchan(&["verify", "--suite", "identity", "--seed", "5"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("instance_id,check_name,lhs,rhs,pass")));
    assert!(!text.contains(",false"));
}

#[test]
fn bounds_curve_has_p_star() {
    let o = cktchan(&["bounds", "--r", "0.1", "--grid", "20"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("# p_star 0.316"));
}
