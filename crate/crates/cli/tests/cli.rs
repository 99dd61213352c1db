use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybisim"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn thermostat() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/models/thermostat.hds")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary(o: &Output) -> String {
    stdout(o).lines().last().unwrap_or_default().to_string()
}

#[test]
fn check_clean_model() {
    let o = bin()
        .args(["check", "--model"])
        .arg(thermostat())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn check_reports_interior_guard() {
    let o = bin()
        .args(["check", "--model"])
        .arg(fixture("interior_guard.hds"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(
        out.contains("jump-not-at-exit") && out.contains("A -> B"),
        "{out}"
    );
}

#[test]
fn missing_and_broken_files_exit_2() {
    let o = bin()
        .args(["check", "--model", "/nonexistent/model.hds"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .args(["bisim", "--model"])
        .arg(fixture("broken.hds"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot parse"));
}

#[test]
fn bisim_writes_reparseable_deterministic_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name);
        let o = bin()
            .args(["bisim", "--eta", "0.0707107", "--format", "json", "--out"])
            .arg(&path)
            .arg("--model")
            .arg(thermostat())
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        let s = summary(&o);
        assert!(
            s.starts_with("k=3 classes=12 grid=68 eta=0.0707107 "),
            "{s}"
        );
        assert!(s.ends_with("status=fixed-point"));
        texts.push(std::fs::read_to_string(&path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let v: serde_json::Value = serde_json::from_str(&texts[0]).unwrap();
    assert_eq!(v["metadata"]["k"], 3);
    assert_eq!(v["metadata"]["grid_size"], 68);
    assert_eq!(v["metadata"]["model_digest"].as_str().unwrap().len(), 64);
    assert_eq!(v["states"].as_array().unwrap().len(), 12);
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["metadata", "states", "transitions"]);
    let rep = &v["states"][0]["representative"];
    assert!(rep["mode"].is_string() && rep["point"].as_array().unwrap().len() == 2);
}

#[test]
fn dot_output_is_well_formed() {
    let o = bin()
        .args(["example", "--format", "dot", "--out", "-"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "digraph quotient {");
    let close = lines.iter().position(|l| *l == "}").unwrap();
    let node = |l: &str| l.starts_with("  n") && l.ends_with("\"];") && l.contains(" [label=\"");
    let body = &lines[1..close];
    assert_eq!(
        body.iter().filter(|l| node(l) && !l.contains("->")).count(),
        12
    );
    assert!(body[1..].iter().all(|l| node(l)));
    assert!(body.iter().filter(|l| l.contains("->")).count() >= 22);
    assert!(lines[close + 1].starts_with("k=3 classes=12"));
}

#[test]
fn sweep_is_stable() {
    let o = bin()
        .args(["example", "--sweep", "--rounds", "3"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rounds: Vec<&str> = out.lines().filter(|l| l.starts_with("round=")).collect();
    assert_eq!(rounds.len(), 3);
    assert!(rounds.iter().all(|l| l.contains(" classes=12 ")));
    assert!(summary(&o).ends_with("status=stable"));
}

#[test]
fn unresolved_runs_exit_3() {
    let o = bin().args(["example", "--k-max", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(summary(&o).ends_with("status=inconclusive"));

    let o = bin()
        .args(["bisim", "--eta", "0.1", "--model"])
        .arg(fixture("open_end.hds"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(summary(&o).ends_with("status=exhausted"), "{}", summary(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("decrease --eta"));
}

#[test]
fn points_dump_has_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let o = bin()
        .args(["example", "--points"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mode,T1,T2,class"));
    assert_eq!(lines.count(), 68);
}
