//! CLI contract: exit codes, artifact naming, and the output-dir override.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_contact-kam")
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    Command::new(bin())
        .arg(cmd)
        .arg(config)
        .env("CONTACT_KAM_OUT", out)
        .output()
        .expect("spawn CLI")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).expect("write config");
    p
}

#[test]
fn missing_required_key_exits_2() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        tmp.path(),
        "no_dt.json",
        r#"{"model":{"family":"synthetic","nodes":1,"edges":[[0,0,0.0]],"lambda":[1.0]},
            "grid":{"n":16}}"#,
    );
    let out = tmp.path().join("out");
    let o = run("critical", &cfg, &out);
    assert_eq!(o.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("grid.dt"),
        "error should name the missing key: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(!out.exists(), "config errors must not leave artifacts behind");
}

#[test]
fn unknown_key_exits_2() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        tmp.path(),
        "typo.json",
        r#"{"model":{"family":"synthetic","nodes":1,"edges":[[0,0,0.0]],"lambda":[1.0]},
            "grid":{"dt":1.0},"solvr":{}}"#,
    );
    let o = run("validate", &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("solvr"),
        "error should echo the unknown key: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn numeric_failure_exits_3_and_records_error() {
    let tmp = tempfile::tempdir().expect("tempdir");
    // eps * Delta * dt = 25 * 1 * 0.1 >= 1 breaks the implicit contraction.
    let cfg = write_config(
        tmp.path(),
        "hot.json",
        r#"{"model":{"family":"synthetic","nodes":1,"edges":[[0,0,0.0]],"lambda":[1.0]},
            "grid":{"dt":0.1},"options":{"eps":25.0}}"#,
    );
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let jsons: Vec<_> = std::fs::read_dir(&out)
        .expect("out dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    assert_eq!(jsons.len(), 1, "numeric failures should still write a summary");
    let text = std::fs::read_to_string(&jsons[0]).expect("read summary");
    let v: serde_json::Value = serde_json::from_str(&text).expect("valid json");
    assert!(
        v["result"]["error"].as_str().unwrap_or("").contains("contraction"),
        "summary should carry the error: {text}"
    );
}

#[test]
fn artifacts_are_hash_named_and_stable() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = tmp.path().join("out");
    let cfg = shipped("two_node.json");
    assert!(run("critical", &cfg, &out).status.success());
    assert!(run("solve", &cfg, &out).status.success());

    let mut names: Vec<String> = std::fs::read_dir(&out)
        .expect("out dir")
        .map(|e| e.expect("entry").file_name().into_string().expect("utf8"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 4, "two commands, two artifacts each: {names:?}");

    let stem = |s: &str| s.split('_').nth(1).unwrap().split('.').next().unwrap().to_string();
    let hashes: Vec<String> = names.iter().map(|n| stem(n)).collect();
    assert!(
        hashes.iter().all(|h| h == &hashes[0]),
        "same config must map to one hash: {names:?}"
    );
    assert_eq!(hashes[0].len(), 12);
    assert!(hashes[0].chars().all(|c| c.is_ascii_hexdigit()));
    for prefix in ["critical_", "solve_"] {
        for ext in [".csv", ".json"] {
            let expect = format!("{prefix}{}{ext}", hashes[0]);
            assert!(names.contains(&expect), "missing {expect} in {names:?}");
        }
    }
}

#[test]
fn dump_graph_writes_edge_list() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = tmp.path().join("out");
    let o = Command::new(bin())
        .arg("validate")
        .arg(shipped("two_node.json"))
        .arg("--dump-graph")
        .env("CONTACT_KAM_OUT", &out)
        .output()
        .expect("spawn CLI");
    assert!(o.status.success());
    let graph_csv: Vec<_> = std::fs::read_dir(&out)
        .expect("out dir")
        .map(|e| e.expect("entry").file_name().into_string().expect("utf8"))
        .filter(|n| n.starts_with("graph_"))
        .collect();
    assert_eq!(graph_csv.len(), 1, "expected one graph dump");
    let text = std::fs::read_to_string(out.join(&graph_csv[0])).expect("read dump");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("edge,src,dst,disp0,disp1,cost"));
    assert_eq!(lines.count(), 3, "two-node model has three edges");
}

#[test]
fn output_dir_defaults_to_config_value() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        tmp.path(),
        "localout.json",
        r#"{"model":{"family":"synthetic","nodes":1,"edges":[[0,0,0.0]],"lambda":[1.0]},
            "grid":{"dt":1.0},"output_dir":"results"}"#,
    );
    let o = Command::new(bin())
        .arg("validate")
        .arg(&cfg)
        .current_dir(tmp.path())
        .env_remove("CONTACT_KAM_OUT")
        .output()
        .expect("spawn CLI");
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(
        tmp.path().join("results").is_dir(),
        "artifacts should land in the configured directory"
    );
}

#[test]
fn vanish_csv_reproduces_two_node_limit() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = tmp.path().join("out");
    assert!(run("vanish", &shipped("two_node.json"), &out).status.success());
    let csv = std::fs::read_dir(&out)
        .expect("out dir")
        .map(|e| e.expect("entry").path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .expect("vanish csv");
    let text = std::fs::read_to_string(csv).expect("read csv");
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    let col = header.iter().position(|h| *h == "u0_direct").expect("u0_direct column");
    let vals: Vec<f64> = lines
        .map(|l| l.split(',').nth(col).unwrap().parse::<f64>().expect("parse"))
        .collect();
    assert_eq!(vals.len(), 2);
    assert!(vals[0].abs() <= 1e-6, "u0(A) = {}", vals[0]);
    assert!((vals[1] - 1.0).abs() <= 1e-6, "u0(B) = {}", vals[1]);
}
