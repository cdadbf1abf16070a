use std::path::Path;
use std::process::{Command, Output};

fn qsrd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsrd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn emit_transfer_inputs(dir: &Path, theta: &str) -> (String, String) {
    let inst = dir.join("instance.json");
    let prot = dir.join("protocol.json");
    assert!(qsrd(&[
        "emit-instance",
        "--d",
        "2",
        "--beta",
        "2",
        "--seed",
        "5",
        "--out",
        path(&inst)
    ])
    .status
    .success());
    assert!(qsrd(&[
        "emit-protocol",
        "--kind",
        "teleport",
        "--d",
        "2",
        "--theta",
        theta,
        "--out",
        path(&prot)
    ])
    .status
    .success());
    (path(&inst).to_string(), path(&prot).to_string())
}

#[test]
fn verify_facts_csv_passes_and_is_reproducible() {
    let a = qsrd(&["verify-facts", "--seed", "7", "--trials", "5", "--dim", "3"]);
    assert_eq!(a.status.code(), Some(0));
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("fact,trial,lhs,rhs,margin,pass"));
    assert!(lines.clone().count() > 0);
    assert!(lines.all(|l| l.ends_with(",true")));
    let b = qsrd(&["verify-facts", "--seed", "7", "--trials", "5", "--dim", "3"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_facts_rejects_bad_arguments() {
    assert_eq!(qsrd(&["verify-facts", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(qsrd(&["verify-facts", "--dim", "5"]).status.code(), Some(2));
}

#[test]
fn verify_facts_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("facts.csv");
    let o = qsrd(&["verify-facts", "--trials", "1", "--out", path(&out)]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("fact,"));
}

#[test]
fn pipeline_on_noisy_teleport_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, prot) = emit_transfer_inputs(dir.path(), "0.1");
    let o = qsrd(&["pipeline", &inst, &prot, "--mu", "0.25"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["pass"], true);
    assert_eq!(report["flags_are_permutations"], true);
    let measured = report["compiled_error"]["measured"].as_f64().unwrap();
    let bound = report["compiled_error"]["bound"].as_f64().unwrap();
    assert!(measured <= bound);
}

#[test]
fn pipeline_on_redistribution_layout() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    let prot = dir.path().join("p.json");
    qsrd(&[
        "emit-instance",
        "--d",
        "2",
        "--d-a",
        "2",
        "--seed",
        "1",
        "--out",
        path(&inst),
    ]);
    qsrd(&[
        "emit-protocol",
        "--kind",
        "teleport",
        "--d",
        "2",
        "--d-a",
        "2",
        "--out",
        path(&prot),
    ]);
    let o = qsrd(&["pipeline", path(&inst), path(&prot), "--mu", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn pipeline_usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, prot) = emit_transfer_inputs(dir.path(), "0");
    let bad_mu = qsrd(&["pipeline", &inst, &prot, "--mu", "0"]);
    assert_eq!(bad_mu.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_mu.stderr).contains("0 < μ < 1"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"schema\": 1,").unwrap();
    assert_eq!(qsrd(&["pipeline", path(&broken), &prot]).status.code(), Some(2));
    assert_eq!(qsrd(&["pipeline", &inst, path(&broken)]).status.code(), Some(2));

    let future = dir.path().join("future.json");
    std::fs::write(&future, r#"{"schema": 2, "d": 2, "d_a": 1, "beta": 2.0, "seed": 0}"#).unwrap();
    assert_eq!(qsrd(&["pipeline", path(&future), &prot]).status.code(), Some(2));
}

#[test]
fn pipeline_rejects_eps_below_measured_error() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, prot) = emit_transfer_inputs(dir.path(), "0.3");
    assert_eq!(
        qsrd(&["pipeline", &inst, &prot, "--eps", "0.001"]).status.code(),
        Some(2)
    );
}

fn theorem_rows(args: &[&str]) -> Vec<Vec<String>> {
    let o = qsrd(args);
    assert_eq!(o.status.code(), Some(0));
    stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn theorem_grid_for_redistribution_contradicts_everywhere() {
    let rows = theorem_rows(&["theorem", "--mode", "redistribution", "--p", "0.5"]);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[3] == "feasible" && r[10] == "true"));
}

#[test]
fn theorem_transfer_interior_contradicts() {
    let rows = theorem_rows(&[
        "theorem",
        "--mode",
        "transfer",
        "--p",
        "0.5",
        "--eps",
        "0,9.094947017729282e-13",
    ]);
    assert!(rows.iter().all(|r| r[10] == "true"));
}

#[test]
fn theorem_marks_infeasible_and_out_of_range_rows() {
    let rows = theorem_rows(&["theorem", "--mode", "transfer", "--p", "1", "--eps", "0.001"]);
    assert_eq!(rows[0][3], "infeasible");
    let rows = theorem_rows(&["theorem", "--mode", "transfer", "--p", "0.5", "--eps", "0.1"]);
    assert_eq!(rows[0][3], "range-violation");
}

#[test]
fn theorem_json_output() {
    let o = qsrd(&[
        "theorem", "--mode", "transfer", "--p", "0.25", "--eps", "1e-20", "--format", "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["status"], "feasible");
    assert!((v[0]["product"].as_f64().unwrap() - 16.0).abs() < 1e-9);
}

#[test]
fn emitted_protocols_round_trip() {
    for kind in ["teleport", "padded-teleport", "synthetic", "do-nothing"] {
        let o = qsrd(&["emit-protocol", "--kind", kind, "--d", "2", "--max-index", "8"]);
        assert!(o.status.success(), "{kind}");
        qsrd_core::protocol::ProtocolSpec::from_json(&stdout(&o)).unwrap();
    }
    assert_eq!(
        qsrd(&["emit-protocol", "--kind", "teleport", "--d", "1"]).status.code(),
        Some(2)
    );
}
