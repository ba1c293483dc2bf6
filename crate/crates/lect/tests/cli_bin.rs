//! Black-box tests of the `lect` binary: ingest validation, offline
//! generation, and error reporting on missing inputs.

use std::path::Path;
use std::process::{Command, Output};

fn lect(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lect"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_graph(path: &Path) {
    // 30 nodes over 3 classes with a duplicate edge that must collapse
    let nodes: Vec<serde_json::Value> = (0..30)
        .map(|i| serde_json::json!({ "id": i, "text": format!("node text {i}"), "label": i % 3 }))
        .collect();
    let graph = serde_json::json!({
        "nodes": nodes,
        "edges": [[0, 1], [1, 0], [2, 3], [4, 5], [6, 7]],
        "num_classes": 3,
    });
    std::fs::write(path, graph.to_string()).unwrap();
}

fn write_config(path: &Path) {
    std::fs::write(
        path,
        "seed = 0\n[split]\nood_classes = [2]\n[generator]\nnum_pseudo = 20\n",
    )
    .unwrap();
}

#[test]
fn ingest_prints_summary_and_dedups_edges() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(&dir.path().join("g.json"));
    let out = lect(&["--out-dir", "out", "ingest", "--input", "g.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("nodes: 30"), "{stdout}");
    assert!(stdout.contains("edges: 4"), "{stdout}");
    assert!(stdout.contains("classes: 3"), "{stdout}");
    assert!(stdout.contains("homophily:"), "{stdout}");
    assert!(dir.path().join("out/graph.json").exists());
}

#[test]
fn ingest_rejects_dangling_edge_naming_the_record() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"nodes": [{"id": 0, "text": "a", "label": 0}], "edges": [[0, 3]], "num_classes": 1}"#,
    )
    .unwrap();
    let out = lect(&["ingest", "--input", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("edge 0"), "{stderr}");
}

#[test]
fn generate_is_offline_deterministic_and_reports_modes() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(&dir.path().join("g.json"));
    write_config(&dir.path().join("cfg.toml"));

    let out = lect(
        &["--config", "cfg.toml", "--out-dir", "out", "generate", "--graph", "g.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pseudo nodes: 20 (10 near / 10 far)"), "{stdout}");
    let first = std::fs::read(dir.path().join("out/pseudo.json")).unwrap();

    let out = lect(
        &["--config", "cfg.toml", "--out-dir", "out", "generate", "--graph", "g.json"],
        dir.path(),
    );
    assert!(out.status.success());
    let second = std::fs::read(dir.path().join("out/pseudo.json")).unwrap();
    assert_eq!(first, second, "regenerated batch must be byte-identical");
}

#[test]
fn eval_without_checkpoint_fails_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(&dir.path().join("g.json"));
    write_config(&dir.path().join("cfg.toml"));
    let out = lect(
        &["--config", "cfg.toml", "eval", "--graph", "g.json", "--checkpoint", "missing.ckpt"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("run train first"), "{stderr}");
}

#[test]
fn missing_ood_classes_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(&dir.path().join("g.json"));
    std::fs::write(dir.path().join("cfg.toml"), "seed = 0\n").unwrap();
    let out = lect(
        &["--config", "cfg.toml", "generate", "--graph", "g.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ood_classes"), "{stderr}");
}

#[test]
fn unknown_config_key_is_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(&dir.path().join("g.json"));
    std::fs::write(dir.path().join("cfg.toml"), "sed = 3\n").unwrap();
    let out = lect(
        &["--config", "cfg.toml", "ingest", "--input", "g.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sed"), "{stderr}");
}
