use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// Runs the binary and returns (exit code, parsed report).
fn reclaim(args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_reclaim"))
        .args(args)
        .output()
        .expect("binary runs");
    let report = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not a report ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    });
    (out.status.code().expect("exited normally"), report)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_toy_certificate_succeeds() {
    let cert = fixture("certs/toy.json");
    let (code, r) = reclaim(&[
        "verify",
        "--scenario",
        "builtin:toy_1d",
        "--rho",
        "0.9",
        "--certificate",
        path(&cert),
    ]);
    assert_eq!(code, 0, "{r}");
    assert_eq!(r["result"]["verdict"], "certified");
    assert_eq!(r["exit_status"], 0);
    let hashed = r["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|i| i["role"] == "certificate")
        .unwrap();
    assert_eq!(hashed["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn scenario_file_matches_builtin() {
    let cert = fixture("certs/toy.json");
    let scenario = fixture("toy_1d.json");
    let (a, ra) = reclaim(&[
        "verify",
        "--scenario",
        "builtin:toy_1d",
        "--certificate",
        path(&cert),
    ]);
    let (b, rb) = reclaim(&[
        "verify",
        "--scenario",
        path(&scenario),
        "--certificate",
        path(&cert),
    ]);
    assert_eq!((a, b), (0, 0));
    assert_eq!(ra["result"], rb["result"]);
}

#[test]
fn refuted_certificate_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("two.json");
    std::fs::write(
        &cert,
        r#"{"layers":[{"weights":[[0.0]],"bias":[2.0],"activation":"relu"}]}"#,
    )
    .unwrap();
    let (code, r) = reclaim(&[
        "verify",
        "--scenario",
        "builtin:toy_1d",
        "--certificate",
        path(&cert),
    ]);
    assert_eq!(code, 1);
    assert_eq!(r["result"]["verdict"], "refuted");
    assert_eq!(r["result"]["failed_condition"], "initial");
}

#[test]
fn invalid_inputs_exit_two() {
    let cert = fixture("certs/toy.json");
    let missing = fixture("no_such_file.json");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "verify",
            "--scenario",
            "builtin:toy_1d",
            "--certificate",
            path(&missing),
        ],
        vec![
            "verify",
            "--scenario",
            "builtin:nowhere",
            "--certificate",
            path(&cert),
        ],
        vec![
            "verify",
            "--scenario",
            "builtin:toy_1d",
            "--rho",
            "1.5",
            "--certificate",
            path(&cert),
        ],
        // Two-dimensional room against a one-dimensional scenario.
        vec![
            "reclaim",
            "--scenario",
            "builtin:toy_1d",
            "--certificate",
            path(&cert),
            "--region",
            "room:4",
        ],
        vec![
            "heatmap",
            "--certificate",
            path(&cert),
            "--scenario",
            "builtin:toy_1d",
            "--out",
            "/dev/null",
        ],
    ];
    for args in cases {
        let (code, r) = reclaim(&args);
        assert_eq!(code, 2, "{args:?}");
        assert!(r["result"]["error"].is_string());
    }
}

#[test]
fn region_outside_state_space_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let region = dir.path().join("far.json");
    std::fs::write(&region, r#"[{"lower":[5.0],"upper":[6.0]}]"#).unwrap();
    let cert = fixture("certs/toy.json");
    let (code, r) = reclaim(&[
        "reclaim",
        "--scenario",
        "builtin:toy_1d",
        "--certificate",
        path(&cert),
        "--region",
        path(&region),
    ]);
    assert_eq!(code, 2, "{r}");
}

#[test]
fn reclaim_reports_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let region = dir.path().join("r.json");
    // The toy certificate 1 - x reaches 0.5 at x = 0.5.
    std::fs::write(&region, r#"[{"lower":[0.25],"upper":[0.5]}]"#).unwrap();
    let cert = fixture("certs/toy.json");
    let (code, r) = reclaim(&[
        "reclaim",
        "--scenario",
        "builtin:toy_1d",
        "--certificate",
        path(&cert),
        "--region",
        path(&region),
    ]);
    // I = 0.5 < 1 leaves nothing to reclaim.
    assert_eq!(code, 1, "{r}");
    let (code, r) = reclaim(&[
        "reclaim",
        "--scenario",
        "builtin:toy_1d",
        "--certificate",
        path(&cert),
        "--region",
        "empty",
    ]);
    assert_eq!(code, 0, "{r}");
}

#[test]
fn simulate_is_deterministic() {
    let args = [
        "simulate",
        "--scenario",
        "builtin:toy_1d",
        "--trajectories",
        "2000",
        "--seed",
        "7",
        "--init",
        "0",
        "--init",
        "0.05",
    ];
    let (a, mut ra) = reclaim(&args);
    let (b, mut rb) = reclaim(&args);
    assert_eq!((a, b), (0, 0));
    ra["wall_time_seconds"] = Value::Null;
    rb["wall_time_seconds"] = Value::Null;
    assert_eq!(
        serde_json::to_string(&ra).unwrap(),
        serde_json::to_string(&rb).unwrap()
    );
    assert_eq!(ra["result"]["per_init"].as_array().unwrap().len(), 2);
}

#[test]
fn heatmap_affine_corners() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("sum.json");
    std::fs::write(
        &cert,
        r#"{"layers":[{"weights":[[1.0,1.0]],"bias":[0.0],"activation":"identity"}]}"#,
    )
    .unwrap();
    let csv = dir.path().join("map.csv");
    let (code, r) = reclaim(&[
        "heatmap",
        "--certificate",
        path(&cert),
        "--grid",
        "2",
        "--domain",
        "0,0,1,1",
        "--out",
        path(&csv),
    ]);
    assert_eq!(code, 0, "{r}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text, "0,0,0\n1,0,1\n0,1,1\n1,1,2\n");

    let (code, _) = reclaim(&[
        "heatmap",
        "--certificate",
        path(&cert),
        "--grid",
        "7",
        "--domain",
        "0,0,1,1",
        "--out",
        path(&csv),
    ]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 49);
}

#[test]
fn heatmap_constant_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("map.csv");
    let cert = fixture("example_graph/high.json");
    let (code, _) = reclaim(&[
        "heatmap",
        "--certificate",
        path(&cert),
        "--grid",
        "5",
        "--scenario",
        "builtin:nine_rooms",
        "--out",
        path(&csv),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().all(|l| l.ends_with(",100")));
}

#[test]
fn compose_example_graph() {
    let graph = fixture("example_graph/graph.json");
    let (code, r) = reclaim(&["compose", "--graph", path(&graph), "--region", "room:2"]);
    assert_eq!(code, 0, "{r}");
    let plan = &r["result"]["plan"];
    assert_eq!(plan["path"], serde_json::json!([0, 3, 4, 7, 8]));
    let rho = plan["global_threshold"].as_f64().unwrap();
    assert!((rho - 0.88 * 0.84 * 0.75 * 0.62).abs() < 1e-12);
    assert!((rho - 0.343728).abs() < 1e-12);
}

#[test]
fn recertify_empty_region_matches_max_threshold() {
    let cert = fixture("certs/toy.json");
    let common = [
        "--scenario",
        "builtin:toy_1d",
        "--certificate",
        path(&cert),
        "--cells",
        "16",
        "--depth",
        "6",
    ];
    let mut a = vec!["max-threshold"];
    a.extend(common);
    let mut b = vec!["recertify", "--region", "empty"];
    b.extend(common);
    let (ca, ra) = reclaim(&a);
    let (cb, rb) = reclaim(&b);
    assert_eq!((ca, cb), (0, 0), "{ra} {rb}");
    assert_eq!(ra["result"]["threshold"], rb["result"]["threshold"]);
}

#[test]
fn report_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let cert = fixture("certs/toy.json");
    let status = Command::new(env!("CARGO_BIN_EXE_reclaim"))
        .args([
            "--report",
            path(&out),
            "verify",
            "--scenario",
            "builtin:toy_1d",
            "--certificate",
            path(&cert),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["command"], "verify");
}
