use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use analysis_success_service::{router, ServiceConfig};
use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_analysis-success"));
    c.current_dir(root());
    c
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

fn write_scenario(dir: &Path, name: &str, v: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn minimal_scenario_evaluates() {
    let out = run(&["evaluate", "scenarios/minimal.json"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["criteria"]["p"], json!(2.0));
    assert_eq!(v["criteria"]["potential_tolerance"], json!(1e-9));
    assert_eq!(v["principles"].as_array().unwrap().len(), 6);
}

#[test]
fn identity_scenario_is_certain() {
    let out = run(&["evaluate", "scenarios/identity.json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for flag in ["strong", "weak", "potential"] {
        assert_eq!(v["success"][flag], json!(true), "{flag}");
    }
    assert_eq!(v["probabilities"]["strong"]["estimate"], json!(1.0));
}

#[test]
fn golden_closed_form() {
    let out = run(&["evaluate", "scenarios/golden.json", "--replicates", "20000"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cf = v["probabilities"]["strong_closed_form"]["estimate"]
        .as_f64()
        .unwrap();
    assert!((cf - 0.73509).abs() < 1e-4, "{cf}");
    let mc = v["probabilities"]["strong"]["estimate"].as_f64().unwrap();
    assert!((mc - cf).abs() <= 3.0 * (cf * (1.0 - cf) / 20000.0).sqrt());
    assert_eq!(v["replicates"], json!(20000));
}

#[test]
fn validation_errors_exit_2_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    let bad = json!({
        "fields": [{ "id": "f", "lambda": [0, 0, 0, 0, 0] }],
        "analyst": { "field": "f" },
        "audience": [{ "field": "f" }, { "field": "ghost" }],
        "criteria": { "epsilon": 0.5 }
    });
    let path = write_scenario(dir.path(), "bad.json", &bad);
    let out = run(&["evaluate", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err = stderr_json(&out);
    assert_eq!(err["kind"], json!("validation"));
    let paths: Vec<&str> = err["errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["path"].as_str().unwrap())
        .collect();
    assert!(paths.contains(&"fields[0].lambda"), "{paths:?}");
    assert!(paths.contains(&"audience[1].field"), "{paths:?}");

    let out = run(&["evaluate", "scenarios/minimal.json", "--replicates", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        stderr_json(&out)["errors"][0]["path"],
        json!("--replicates")
    );

    let out = run(&[
        "sweep",
        "scenarios/golden.json",
        "--param",
        "delta",
        "--grid",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&[
        "sweep",
        "scenarios/golden.json",
        "--param",
        "epsilon",
        "--grid",
        "2,1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["errors"][0]["path"], json!("grid[1]"));

    let out = run(&["correct", "scenarios/golden.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["errors"].is_array());
}

#[test]
fn unwritable_output_exits_3() {
    let out = run(&[
        "evaluate",
        "scenarios/minimal.json",
        "--out",
        "/nonexistent-dir/report.json",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["kind"], json!("runtime"));
}

#[test]
fn out_and_table_formats() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let out = run(&[
        "evaluate",
        "scenarios/group.json",
        "--format",
        "table",
        "--replicates",
        "500",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "k,name,psi,expected_psi,alpha_mean,expected_alpha_mean,distance,expected_distance"
    );
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("1,data-matching,"));

    let out = run(&[
        "sweep",
        "scenarios/correction.json",
        "--param",
        "rho",
        "--grid",
        "0,0.5,1",
        "--format",
        "table",
        "--replicates",
        "500",
    ]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 6);
    assert!(csv.starts_with("parameter,value,k,name,"));
}

#[test]
fn seed_changes_report_and_digest() {
    let a = run(&[
        "evaluate",
        "scenarios/golden.json",
        "--seed",
        "1",
        "--replicates",
        "1000",
    ]);
    let b = run(&[
        "evaluate",
        "scenarios/golden.json",
        "--seed",
        "2",
        "--replicates",
        "1000",
    ]);
    let (a, b): (Value, Value) = (
        serde_json::from_slice(&a.stdout).unwrap(),
        serde_json::from_slice(&b.stdout).unwrap(),
    );
    assert_eq!(a["seed"], json!(1));
    assert_ne!(a["scenario_digest"], b["scenario_digest"]);
    assert_ne!(a["principles"], b["principles"]);
}

#[test]
fn sweeps_from_the_command_line() {
    let out = run(&[
        "sweep",
        "scenarios/golden.json",
        "--param",
        "epsilon",
        "--grid",
        "0.1,1,10",
        "--replicates",
        "5000",
    ]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let p: Vec<f64> = v["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            p["report"]["probabilities"]["strong"]["estimate"]
                .as_f64()
                .unwrap()
        })
        .collect();
    assert!(p.windows(2).all(|w| w[0] <= w[1]), "{p:?}");

    let out = run(&[
        "sweep",
        "scenarios/group.json",
        "--param",
        "audience-size",
        "--grid",
        "1,10,100,1000",
        "--replicates",
        "2000",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let var: Vec<f64> = v["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let v = p["report"]["monte_carlo"]["audience_mean_deviation_variance"]
                .as_array()
                .unwrap();
            v.iter().map(|x| x.as_f64().unwrap()).sum::<f64>() / v.len() as f64
        })
        .collect();
    for (w, j) in var.windows(2).zip([1.0, 10.0, 100.0]) {
        let ratio = w[0] / w[1];
        assert!((ratio / 10.0 - 1.0).abs() < 0.25, "J={j}: ratio {ratio}");
    }
}

#[tokio::test]
async fn cli_and_api_agree() {
    for (cmd, uri, file) in [
        ("evaluate", "/api/evaluate", "scenarios/golden.json"),
        ("correct", "/api/correct", "scenarios/correction.json"),
    ] {
        let out = run(&[cmd, file]);
        assert!(out.status.success());
        let cli: Value = serde_json::from_slice(&out.stdout).unwrap();

        let body = std::fs::read_to_string(root().join(file)).unwrap();
        let app = router(ServiceConfig::default()).unwrap();
        let resp = app
            .oneshot(Request::post(uri).body(Body::from(body)).unwrap())
            .await
            .unwrap();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let mut api: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(
            api.as_object_mut().unwrap().remove("errors"),
            Some(json!([]))
        );
        assert_eq!(cli, api, "{cmd}");
    }
}
