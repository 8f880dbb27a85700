use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_teamforge");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn evolve(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let out = dir.join(name);
    let o = run(&[
        "evolve",
        "--roster",
        p(&fixture("roster12.json")),
        "--spec",
        p(&fixture("spec12.json")),
        "--seed",
        seed,
        "--pop",
        "32",
        "--gens",
        "20",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn evolve_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(evolve(dir.path(), "a.json", "11")).unwrap();
    let b = std::fs::read(evolve(dir.path(), "b.json", "11")).unwrap();
    assert_eq!(a, b);
    let doc: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["seed"], 11);
    assert_eq!(doc["roster_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn explicit_mutation_rate_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.json");
    let o = run(&[
        "evolve",
        "--roster",
        p(&fixture("roster12.json")),
        "--spec",
        p(&fixture("spec12.json")),
        "--seed",
        "2",
        "--gens",
        "5",
        "--mut",
        "0.5",
        "--cx",
        "0.7",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"team_size": 1, "required": []}"#).unwrap();
    let out = dir.path().join("a.json");
    let o = run(&[
        "evolve",
        "--roster",
        p(&fixture("roster12.json")),
        "--spec",
        p(&spec),
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("team size"));
    assert!(!out.exists());

    let o = run(&[
        "evolve",
        "--roster",
        "missing.json",
        "--spec",
        p(&spec),
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["evolve", "--seed", "x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_an_internal_error() {
    let o = run(&[
        "oracle",
        "--roster",
        p(&fixture("roster12.json")),
        "--spec",
        p(&fixture("spec12.json")),
        "--out",
        "/nonexistent-dir/front.json",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_refuses_large_rosters() {
    let dir = tempfile::tempdir().unwrap();
    let members: Vec<Value> = (0..30)
        .map(|i| json!({"id": format!("p{i:02}"), "name": "", "org": "", "expertise": {}}))
        .collect();
    let roster = dir.path().join("roster.json");
    std::fs::write(
        &roster,
        json!({"members": members, "familiarity": []}).to_string(),
    )
    .unwrap();
    let spec = dir.path().join("spec.json");
    // C(30, 6) = 593,775
    std::fs::write(&spec, r#"{"team_size": 6, "required": []}"#).unwrap();
    let out = dir.path().join("front.json");
    let o = run(&[
        "oracle",
        "--roster",
        p(&roster),
        "--spec",
        p(&spec),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn simulate_reports_identification() {
    let dir = tempfile::tempdir().unwrap();
    let archive = evolve(dir.path(), "a.json", "3");
    let doc: Value = serde_json::from_slice(&std::fs::read(&archive).unwrap()).unwrap();
    // a coverage-only user wants the archive's best-coverage team; find it by hand
    let entries = doc["entries"].as_array().unwrap();
    let best = entries
        .iter()
        .max_by(|a, b| {
            let f = |e: &Value| e["objectives"]["coverage"].as_f64().unwrap();
            f(a).total_cmp(&f(b))
        })
        .unwrap();
    let unique = entries
        .iter()
        .filter(|e| e["objectives"]["coverage"] == best["objectives"]["coverage"])
        .count();
    let ids: Vec<&str> = best["member_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();

    let out = dir.path().join("results.json");
    let o = run(&[
        "simulate",
        "--archive",
        p(&archive),
        "--user-weights",
        "0,0,1",
        "--tau",
        "0",
        "--user-seed",
        "7",
        "--trials",
        "4",
        "--max-arms",
        "64",
        "--budget",
        "200",
        "--true-best",
        &ids.join(","),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let trials = report["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 4);
    assert_eq!(trials[3]["user_seed"], 10);
    assert!(trials.iter().all(|t| t["identified"].is_boolean()));
    if unique == 1 {
        assert_eq!(report["identification_rate"], 1.0);
    }
}

#[test]
fn interactive_recommend_reads_answers() {
    let dir = tempfile::tempdir().unwrap();
    let archive = evolve(dir.path(), "a.json", "4");
    let mut child = Command::new(BIN)
        .args(["recommend", "--archive", p(&archive), "--budget", "3"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"1\nnonsense\n9\ns\n2\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.matches("enter a number").count(), 2);
    assert!(text.contains("recommended team: {"));
    assert!(text.contains("after 3 rounds"));
}

#[test]
fn interactive_recommend_fails_cleanly_on_eof() {
    let dir = tempfile::tempdir().unwrap();
    let archive = evolve(dir.path(), "a.json", "4");
    let mut child = Command::new(BIN)
        .args(["recommend", "--archive", p(&archive)])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"1\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}
