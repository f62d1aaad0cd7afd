use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn ratspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratspec")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn example(name: &str) -> String {
    manifest(&format!("examples/{name}")).display().to_string()
}

#[test]
fn linearize_json_matches_golden() {
    let o = ratspec(&["linearize", "--expr", &example("sum_inv.expr"), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let golden = std::fs::read_to_string(manifest("tests/golden/sum_inv_linearize.json")).unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn parse_prints_canonical_text() {
    let o = ratspec(&["parse", "--text", "x1 + inv(x2)", "--signature", "d1=2 d2=0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("((x1) + ((x2)^-1))\n"));
}

#[test]
fn input_errors_exit_with_two() {
    let o = ratspec(&["parse", "--expr", &example("bad.expr")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown variable x2 at byte 6"));

    let o = ratspec(&["parse", "--text", "x1 + (", "--signature", "1,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(ratspec(&["linearize"]).status.code(), Some(2));
    assert_eq!(ratspec(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ratspec(&["eval", "--expr", "/nonexistent.expr", "--N", "2"]).status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_ratspec"))
        .args(["converge", "--config", &example("arcsine.json")])
        .env("RATSPEC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selfadjoint_check_verdicts() {
    let yes = ratspec(&["sa-check", "--text", "x1*x2 + x2*x1", "--signature", "2,0", "--json"]);
    assert_eq!(yes.status.code(), Some(0));
    assert_eq!(json(&yes)["selfadjoint"], true);
    let no = ratspec(&["sa-check", "--text", "x1*x2", "--signature", "2,0", "--json"]);
    assert_eq!(no.status.code(), Some(1));
    assert_eq!(json(&no)["selfadjoint"], false);
}

#[test]
fn converge_refuses_non_selfadjoint_input() {
    let o = ratspec(&["converge", "--text", "x1*x2", "--signature", "2,0", "--N", "10"]);
    assert_eq!(o.status.code(), Some(1));
    let o = ratspec(&["converge", "--text", "x1*x2", "--signature", "2,0", "--N", "10", "--force", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["selfadjoint"], "forced");
}

#[test]
fn nondegeneracy_scan() {
    let o = ratspec(&["nondeg", "--expr", &example("commutator_inv.expr"), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["N"], 2);
    assert_eq!(v["witness"]["N"], 2);
    let o = ratspec(&["nondeg", "--expr", &example("commutator_inv.expr"), "--N", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_at_witness_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratspec(&["nondeg", "--expr", &example("commutator_inv.expr"), "--json"]);
    let point = dir.path().join("point.json");
    std::fs::write(&point, json(&o)["witness"].to_string()).unwrap();
    let o = ratspec(&["eval", "--expr", &example("commutator_inv.expr"), "--point", point.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["in_domain"], true);
    assert_eq!(v["value"].as_array().unwrap().len(), 2);

    // Scalars commute, so the commutator is not invertible at N = 1.
    std::fs::write(&point, r#"{"N": 1, "Xs": [[[[1.0, 0.0]]], [[[2.0, 0.0]]]], "Us": []}"#).unwrap();
    let o = ratspec(&["eval", "--expr", &example("commutator_inv.expr"), "--point", point.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(1));
    let v = json(&o);
    assert_eq!(v["in_domain"], false);
    assert_eq!(v["path"], "root.inner");
}

#[test]
fn fullness_from_bordered_pencil_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratspec(&["linearize", "--expr", &example("sum_then_invert.expr"), "--schur", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let pencil = dir.path().join("pencil.json");
    std::fs::write(&pencil, &o.stdout).unwrap();
    let o = ratspec(&["fullness", "--pencil", pencil.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["verdict"], "Full");

    let o = ratspec(&["fullness", "--text", "x1 - x1", "--signature", "1,0", "--json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["verdict"], "ProbablyNotFull");
}

#[test]
fn inner_rank_of_rank_one_matrix() {
    let o = ratspec(&["rank", "--matrix", &example("rank_one.mat"), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["rho"], 1);
    assert!(v["per_n"].as_array().unwrap().iter().all(|r| r["kernel_fraction"] == 0.5));
}

#[test]
fn sample_writes_tuples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ratspec(&["sample", "--signature", "1,1", "--N", "3", "--samples", "2", "--out", out, "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let t: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("tuple_N3_s1.json")).unwrap()).unwrap();
    assert_eq!(t["N"], 3);
    assert_eq!(t["Xs"].as_array().unwrap().len(), 1);
    assert_eq!(t["Us"].as_array().unwrap().len(), 1);

    let a = ratspec(&["sample", "--signature", "1,1", "--N", "3", "--seed", "4"]);
    let b = ratspec(&["sample", "--signature", "1,1", "--N", "3", "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn converge_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = ratspec(&[
        "converge",
        "--expr",
        &example("arcsine.expr"),
        "--N",
        "20,40",
        "--samples",
        "2",
        "--reference",
        "arcsine2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "cdf_N20.csv", "cdf_N40.csv", "spectrum_N40_s1.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["samples"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(out.join("spectrum_N20_s0.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,value"));
    assert_eq!(csv.lines().count(), 21);
}
