use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use contrastive::model::{BuiltinModel, Node};
use contrastive::schema::{serialize_csv, Schema};
use contrastive::synthetic::{mixed_dataset, mixed_schema};
use serde_json::Value;
use tempfile::TempDir;

const FAST: [&str; 6] = ["--steps", "10", "--grad-samples", "10", "--restarts", "1"];

fn contrast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contrast"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = contrast(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn workspace(rows: usize) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let schema = mixed_schema();
    std::fs::write(dir.path().join("schema.json"), schema.to_json().unwrap()).unwrap();
    std::fs::write(
        dir.path().join("data.csv"),
        serialize_csv(&mixed_dataset(rows, 3), &schema).unwrap(),
    )
    .unwrap();
    dir
}

fn train(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "train",
        "cart",
        "--schema",
        "schema.json",
        "--data",
        "data.csv",
        "--out",
        "model.json",
    ];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn depth(nodes: &[Node], at: usize) -> usize {
    match &nodes[at] {
        Node::Split { left, right, .. } => 1 + depth(nodes, *left).max(depth(nodes, *right)),
        _ => 0,
    }
}

#[test]
fn bases_fills_every_base_and_keeps_given_ones() {
    let dir = workspace(120);
    let mut schema: Value = serde_json::from_str(&mixed_schema().to_json().unwrap()).unwrap();
    schema["features"][1]["base"] = serde_json::json!(33.0);
    schema["features"][4]["base"] = serde_json::json!("no");
    std::fs::write(dir.path().join("given.json"), schema.to_string()).unwrap();
    ok(
        dir.path(),
        &[
            "bases",
            "--schema",
            "given.json",
            "--data",
            "data.csv",
            "--out",
            "done.json",
        ],
    );
    let done = Schema::from_json(&std::fs::read_to_string(dir.path().join("done.json")).unwrap()).unwrap();
    assert!(done.features.iter().all(|f| f.base.is_some() && f.std.is_some()));
    assert_eq!(done.features[1].base, Some(33.0));
    assert_eq!(done.features[4].base, Some(1.0));
    assert!(done.provenance.is_some());
}

#[test]
fn special_values_are_replaced_before_the_median() {
    let dir = tempfile::tempdir().unwrap();
    let schema = r#"{"features":[{"name":"x","kind":"real","substitutions":[[-9,0],[-8,0]]}],
        "target":"y","classes":["a","b"]}"#;
    std::fs::write(dir.path().join("s.json"), schema).unwrap();
    std::fs::write(dir.path().join("d.csv"), "x,y\n-9,a\n-8,a\n-9,b\n5,b\n6,a\n").unwrap();
    ok(
        dir.path(),
        &["bases", "--schema", "s.json", "--data", "d.csv", "--out", "o.json"],
    );
    let done = read_json(&dir.path().join("o.json"));
    // values become 0, 0, 0, 5, 6
    assert_eq!(done["features"][0]["base"], serde_json::json!(0.0));
}

#[test]
fn train_respects_depth_and_is_reproducible() {
    let dir = workspace(200);
    train(dir.path(), &["--max-depth", "3", "--split", "0.75", "--seed", "4"]);
    let first = std::fs::read(dir.path().join("model.json")).unwrap();
    train(dir.path(), &["--max-depth", "3", "--split", "0.75", "--seed", "4"]);
    assert_eq!(first, std::fs::read(dir.path().join("model.json")).unwrap());

    let file = read_json(&dir.path().join("model.json"));
    let model: BuiltinModel = serde_json::from_value(file["model"].clone()).unwrap();
    let BuiltinModel::Cart(tree) = model else {
        panic!("expected a tree")
    };
    assert!(depth(&tree.nodes, 0) <= 3);
    assert_eq!(file["split"]["test"].as_array().unwrap().len(), 50);
    assert_eq!(file["provenance"]["seed"], 4);
    assert!(file["provenance"]["config_hash"].is_string());
}

#[test]
fn train_forest() {
    let dir = workspace(150);
    ok(
        dir.path(),
        &[
            "train",
            "forest",
            "--trees",
            "5",
            "--max-depth",
            "4",
            "--schema",
            "schema.json",
            "--data",
            "data.csv",
            "--out",
            "f.json",
        ],
    );
    let file = read_json(&dir.path().join("f.json"));
    assert_eq!(file["model"]["kind"], "forest");
    assert_eq!(file["model"]["trees"].as_array().unwrap().len(), 5);
}

#[test]
fn explain_one_row_then_evaluate() {
    let dir = workspace(160);
    train(dir.path(), &["--split", "0.75"]);
    let mut args = vec![
        "explain",
        "--model",
        "model.json",
        "--data",
        "data.csv",
        "--row",
        "7",
        "--seed",
        "2",
    ];
    args.extend_from_slice(&FAST);
    let stdout = ok(dir.path(), &args);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1);
    let e: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(e["row"], 7);
    assert_eq!(e["diagnostics"]["seed"], 9);
    assert!(e["diagnostics"]["config_hash"].is_string());
    assert!(e["diagnostics"]["tool_version"].is_string());

    std::fs::write(dir.path().join("e.ndjson"), &stdout).unwrap();
    let table = ok(
        dir.path(),
        &[
            "evaluate",
            "--model",
            "model.json",
            "--data",
            "data.csv",
            "--explanations",
            "e.ndjson",
            "--out",
            "r.json",
        ],
    );
    assert!(table.contains("CCP (%)"));
    let report = read_json(&dir.path().join("r.json"));
    assert_eq!(report["cfip_available"], true);
    assert!(report["provenance"]["tool_version"].is_string());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = workspace(120);
    train(dir.path(), &[]);
    std::fs::write(
        dir.path().join("run.toml"),
        "model = \"model.json\"\ndata = \"data.csv\"\nseed = 40\n[solver]\niterations = 5\nrestarts = 0\n[solver.grad]\nq = 5\n",
    )
    .unwrap();
    let from_file = ok(dir.path(), &["explain", "--config", "run.toml", "--row", "0"]);
    let e: Value = serde_json::from_str(from_file.trim()).unwrap();
    assert_eq!(e["diagnostics"]["seed"], 40);
    let overridden = ok(
        dir.path(),
        &["explain", "--config", "run.toml", "--row", "0", "--seed", "41"],
    );
    let e: Value = serde_json::from_str(overridden.trim()).unwrap();
    assert_eq!(e["diagnostics"]["seed"], 41);

    std::fs::write(dir.path().join("bad.toml"), "[solver]\nbogus = 1\n").unwrap();
    let out = contrast(
        dir.path(),
        &[
            "explain",
            "--config",
            "bad.toml",
            "--model",
            "model.json",
            "--data",
            "data.csv",
            "--row",
            "0",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn exit_codes() {
    let dir = workspace(80);
    train(dir.path(), &[]);
    let base = ["explain", "--data", "data.csv", "--row", "0"];

    // no model source
    assert_eq!(code(&contrast(dir.path(), &base)), 2);
    // invalid solver setting
    let out = contrast(
        dir.path(),
        &[
            "explain",
            "--model",
            "model.json",
            "--data",
            "data.csv",
            "--row",
            "0",
            "--steps",
            "0",
        ],
    );
    assert_eq!(code(&out), 2);
    // --all-test without a split
    let out = contrast(
        dir.path(),
        &["explain", "--model", "model.json", "--data", "data.csv", "--all-test"],
    );
    assert_eq!(code(&out), 2);
    // bad data
    std::fs::write(dir.path().join("bad.csv"), "income,age\n1,2\n").unwrap();
    let out = contrast(
        dir.path(),
        &["explain", "--model", "model.json", "--data", "bad.csv", "--row", "0"],
    );
    assert_eq!(code(&out), 3);
    let out = contrast(
        dir.path(),
        &["explain", "--model", "model.json", "--data", "data.csv", "--row", "999"],
    );
    assert_eq!(code(&out), 3);
    // unreachable remote model: the row failure is recorded and the run exits 4
    let mut args = vec![
        "explain",
        "--remote",
        "http://127.0.0.1:9",
        "--schema",
        "schema.json",
        "--data",
        "data.csv",
        "--row",
        "0",
    ];
    args.extend_from_slice(&FAST);
    let out = contrast(dir.path(), &args);
    assert_eq!(code(&out), 4);
    let line: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["row"], 0);
    assert_eq!(line["code"], 4);
}

#[test]
fn evaluate_rejects_empty_and_foreign_files() {
    let dir = workspace(80);
    train(dir.path(), &[]);
    std::fs::write(dir.path().join("empty.ndjson"), "\n").unwrap();
    let out = contrast(
        dir.path(),
        &[
            "evaluate",
            "--model",
            "model.json",
            "--data",
            "data.csv",
            "--explanations",
            "empty.ndjson",
        ],
    );
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no explanations"));

    let mut args = vec!["explain", "--model", "model.json", "--data", "data.csv", "--row", "1"];
    args.extend_from_slice(&FAST);
    let line = ok(dir.path(), &args).replace("\"version\":1", "\"version\":99");
    std::fs::write(dir.path().join("future.ndjson"), line).unwrap();
    let out = contrast(
        dir.path(),
        &[
            "evaluate",
            "--model",
            "model.json",
            "--data",
            "data.csv",
            "--explanations",
            "future.ndjson",
        ],
    );
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

struct Stub(Child);

impl Drop for Stub {
    fn drop(&mut self) {
        let _ = self.0.kill();
    }
}

fn start_stub(dir: &Path, args: &[&str]) -> (Stub, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_contrast"))
        .arg("serve-stub")
        .args(args)
        .current_dir(dir)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();
    (Stub(child), url)
}

#[test]
fn remote_model_through_stub_server() {
    let dir = workspace(120);
    train(dir.path(), &[]);
    let (_stub, url) = start_stub(dir.path(), &["--model", "model.json"]);
    let mut args = vec![
        "explain",
        "--remote",
        &url,
        "--schema",
        "schema.json",
        "--data",
        "data.csv",
        "--row",
        "2",
    ];
    args.extend_from_slice(&FAST);
    let stdout = ok(dir.path(), &args);
    std::fs::write(dir.path().join("e.ndjson"), &stdout).unwrap();
    let table = ok(
        dir.path(),
        &[
            "evaluate",
            "--remote",
            &url,
            "--schema",
            "schema.json",
            "--data",
            "data.csv",
            "--explanations",
            "e.ndjson",
            "--out",
            "r.json",
        ],
    );
    assert!(table.contains("n/a"));
    let report = read_json(&dir.path().join("r.json"));
    assert_eq!(report["cfip_available"], false);
    assert!(report["notices"]
        .as_array()
        .unwrap()
        .iter()
        .any(|n| n.as_str().unwrap().contains("CFIP")));
}

#[test]
fn fixed_score_stub_answers_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let (_stub, url) = start_stub(dir.path(), &["--fixed", "0.1,-2.3"]);
    let schema = Schema::new(
        vec![contrastive::schema::FeatureSpec::real("a")],
        "t",
        vec!["n".into(), "p".into()],
    )
    .unwrap();
    let model = contrastive::model::remote_model(&url, &schema);
    let scores = model.predict_scores(&[vec![1.0], vec![2.0]]).unwrap();
    assert_eq!(scores[1].0, vec![0.1, -2.3]);
}
