mod common;

use common::*;
use modelcaller::cli::{run, EXIT_ASSERTION, EXIT_GATEWAY, EXIT_OK, EXIT_USAGE};
use modelcaller::core::Role;
use serde_json::{json, Value};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn mc(args: &[&str]) -> Out {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("mc").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Out { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

/// Runs `args` against `url` as `role` in `--json` mode and parses stdout.
fn mc_json(url: &str, role: Role, args: &[&str]) -> Value {
    let k = key(role);
    let mut full = vec!["--url", url, "--key", &k, "--json"];
    full.extend_from_slice(args);
    let out = mc(&full);
    assert_eq!(out.code, EXIT_OK, "{args:?}: {}", out.stderr);
    serde_json::from_str(out.stdout.trim()).unwrap_or_else(|e| panic!("{args:?}: {e}: {}", out.stdout))
}

fn write_json(dir: &std::path::Path, name: &str, v: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(mc(&[]).code, EXIT_USAGE);
    assert_eq!(mc(&["caller", "frobnicate"]).code, EXIT_USAGE);
    assert_eq!(mc(&["review", "apply", "t.1"]).code, EXIT_USAGE);
    assert_eq!(mc(&["review", "apply", "t.1", "--confirm", "--reward", "1"]).code, EXIT_USAGE);
    assert_eq!(mc(&["target", "set", "c", "everything"]).code, EXIT_USAGE);
    assert_eq!(mc(&["dataset", "show", "c", "--category", "diamond"]).code, EXIT_USAGE);
    assert_eq!(mc(&["caller", "call", "c", "{not json"]).code, EXIT_USAGE);
    assert_eq!(mc(&["--help"]).code, EXIT_OK);
}

#[test]
fn gateway_errors_exit_two() {
    let service = serve(None);
    let url = service.url();
    let out = mc(&["--url", &url, "caller", "list"]);
    assert_eq!(out.code, EXIT_GATEWAY);
    assert!(out.stderr.contains("401"), "{}", out.stderr);

    let viewer = key(Role::Viewer);
    let out = mc(&["--url", &url, "--key", &viewer, "target", "set", "nope", "host"]);
    assert_eq!(out.code, EXIT_GATEWAY);
    assert!(out.stderr.contains("forbidden"), "{}", out.stderr);

    let admin = key(Role::Admin);
    let out = mc(&["--url", &url, "--key", &admin, "caller", "show", "nope"]);
    assert_eq!(out.code, EXIT_GATEWAY);
    assert!(out.stderr.contains("404"), "{}", out.stderr);

    assert_eq!(mc(&["--url", "http://127.0.0.1:9", "--key", &admin, "caller", "list"]).code, EXIT_GATEWAY);
}

#[test]
fn commands_match_the_gateway() {
    let service = serve(None);
    let url = service.url();
    let dir = tempfile::tempdir().unwrap();
    let create = write_json(dir.path(), "caller.json", &fraud_caller_json("cli-fraud"));
    let view = mc_json(&url, Role::Swe, &["caller", "create", &create]);
    let id = view["id"].as_str().unwrap().to_string();

    let model = json!({"callable": {"id": "cli-model", "builtin": {"type": "constant", "value": 0}}});
    let reg = mc_json(&url, Role::Mle, &["caller", "register", &id, &write_json(dir.path(), "model.json", &model)]);
    assert!(reg["registration"].is_string());

    let admin = key(Role::Admin);
    let list = mc_json(&url, Role::Viewer, &["caller", "list"]);
    assert_eq!(list, http(&url, "GET", "/v1/callers", Some(&admin), None).1);

    let result = mc_json(&url, Role::Operator, &["caller", "call", &id, &transaction(4000.0).to_string()]);
    assert!(result["output"]["fraud"].is_number());
    let token = result["review_token"].as_str().unwrap().to_string();

    let shown = mc_json(&url, Role::Viewer, &["caller", "show", &id]);
    assert_eq!(shown, http(&url, "GET", &format!("/v1/callers/{id}"), Some(&admin), None).1);

    let pending = mc_json(&url, Role::Operator, &["review", "list", &id]);
    assert_eq!(pending.as_array().unwrap().len(), 1);
    assert_eq!(pending[0]["token"], token.as_str());

    let sample = mc_json(&url, Role::Operator, &["review", "apply", &token, "--override", r#"{"fraud": 0}"#]);
    assert_eq!(sample["supervision"], "supervised");
    assert_eq!(sample["output"]["fraud"], 0.0);
    let again = mc(&["--url", &url, "--key", &admin, "review", "apply", &token, "--confirm"]);
    assert_eq!(again.code, EXIT_GATEWAY);
    assert!(again.stderr.contains("409"), "{}", again.stderr);

    let target = mc_json(&url, Role::Swe, &["target", "set", &id, "both"]);
    assert_eq!(target["call_target"], "both");
    let after = mc_json(&url, Role::Operator, &["caller", "call", &id, &transaction(10.0).to_string()]);
    assert_eq!(after["member_outputs"].as_array().unwrap().len(), 2);

    let metrics = mc_json(&url, Role::Viewer, &["caller", "metrics", &id]);
    assert_eq!(metrics, http(&url, "GET", &format!("/v1/callers/{id}/metrics"), Some(&admin), None).1);
    assert_eq!(metrics["call_target"], "both");

    let v = key(Role::Viewer);
    let out = mc(&["--url", &url, "--key", &v, "dataset", "show", &id, "--limit", "5"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let lines: Vec<Value> = out.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|s| s["caller_id"] == id.as_str()));
}

#[test]
fn human_output_is_line_oriented() {
    let service = serve(None);
    let url = service.url();
    let dir = tempfile::tempdir().unwrap();
    let admin = key(Role::Admin);
    let create = write_json(dir.path(), "caller.json", &fraud_caller_json("plain"));
    let out = mc(&["--url", &url, "--key", &admin, "caller", "create", &create]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.starts_with("created "), "{}", out.stdout);
    let out = mc(&["--url", &url, "--key", &admin, "caller", "list"]);
    assert_eq!(out.stdout.lines().count(), 1);
    assert!(out.stdout.contains("target=host"), "{}", out.stdout);
    let id = out.stdout.split('\t').next().unwrap();
    let out = mc(&["--url", &url, "--key", &admin, "review", "list", id]);
    assert_eq!(out.stdout.trim(), "no pending reviews");
    let out = mc(&["--url", &url, "--key", &admin, "plan", "status", id]);
    assert_eq!(out.stdout.trim(), "no plan");
}

#[test]
fn plans_run_from_the_command_line() {
    let service = serve(None);
    let url = service.url();
    let dir = tempfile::tempdir().unwrap();
    let view = mc_json(&url, Role::Swe, &["caller", "create", &write_json(dir.path(), "c.json", &fraud_caller_json("planned"))]);
    let id = view["id"].as_str().unwrap().to_string();
    let model = json!({"callable": {"id": "planned-model", "builtin": {"type": "constant", "value": 0}}});
    let rid = mc_json(&url, Role::Mle, &["caller", "register", &id, &write_json(dir.path(), "m.json", &model)])["registration"]
        .as_str()
        .unwrap()
        .to_string();

    let plan = mc_json(&url, Role::Mle, &["plan", "start", &id, &rid, "--drift-window", "20"]);
    assert_eq!(plan["state"]["state"], "host_only");
    let denied = mc(&["--url", &url, "--key", &key(Role::Swe), "target", "set", &id, "registered"]);
    assert_eq!(denied.code, EXIT_GATEWAY);
    assert!(denied.stderr.contains("409"), "{}", denied.stderr);
    let stepped = mc_json(&url, Role::Mle, &["plan", "step", &id]);
    assert_eq!(stepped["steps"], 1);
    assert_eq!(mc_json(&url, Role::Viewer, &["plan", "status", &id]), stepped);
}

#[test]
fn demo_check_reports_through_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let csv = dir.path().join("timeline.csv");
    let (r, c) = (report.to_string_lossy().into_owned(), csv.to_string_lossy().into_owned());
    let out = mc(&["demo", "run", "--check", "--drift-at", "3000", "--out", &r, "--csv", &c]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.contains("checks passed"));
    let parsed: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["regions"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() > 1);

    // Too short to finish the migration.
    let out = mc(&["demo", "run", "--check", "--steps", "100", "--out", &r]);
    assert_eq!(out.code, EXIT_ASSERTION);
    assert!(out.stderr.contains("expected model_only"), "{}", out.stderr);

    assert_eq!(mc(&["demo", "run", "--steps", "100", "--drift-at", "100"]).code, EXIT_USAGE);
}

#[test]
fn demo_runs_are_reproducible() {
    let a = mc(&["demo", "run", "--steps", "300", "--seed", "7"]);
    let b = mc(&["demo", "run", "--steps", "300", "--seed", "7"]);
    assert_eq!(a.code, EXIT_OK);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, mc(&["demo", "run", "--steps", "300", "--seed", "8"]).stdout);
}
