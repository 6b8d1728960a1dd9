use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn nsscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsscale"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Copy of the fixture catalog with the NSD rewritten by `edit`.
fn edited_catalog(edit: impl FnOnce(&mut serde_json::Value)) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixtures().join("fig4")).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let nsd = dir.path().join("nsd.json");
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&nsd).unwrap()).unwrap();
    edit(&mut doc);
    fs::write(&nsd, doc.to_string()).unwrap();
    dir
}

#[test]
fn validate_fixture_is_clean() {
    let out = nsscale(&["validate", s(&fixtures().join("fig4"))]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
}

#[test]
fn validate_reports_a_dangling_vnf_il() {
    let dir = edited_catalog(|d| {
        d["flavors"][0]["ns_ils"][0]["vnf_entries"]["vnf-A"]["vnf_il_ref"] = "IL#9".into();
    });
    let out = nsscale(&["validate", s(dir.path())]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.starts_with("referential-integrity "), "{text}");
    assert!(text.contains("IL#9"), "{text}");
}

#[test]
fn missing_paths_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let gone = dir.path().join("absent");
    assert_eq!(code(&nsscale(&["validate", s(&gone)])), 2);
    assert_eq!(code(&nsscale(&["run", s(&gone.join("s.json"))])), 2);
}

#[test]
fn runs_with_the_same_seed_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixtures().join("scenarios/golden.json");
    let mut files = Vec::new();
    for i in 0..2 {
        let trace = dir.path().join(format!("trace{i}.txt"));
        let state = dir.path().join(format!("state{i}.json"));
        let out = nsscale(&["run", s(&scenario), "--seed", "7", "--trace", s(&trace), "--state", s(&state)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        files.push((fs::read(trace).unwrap(), fs::read(state).unwrap()));
    }
    assert!(!files[0].0.is_empty());
    assert_eq!(files[0], files[1]);
}

#[test]
fn overload_run_ends_on_the_scaled_level() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let trace = dir.path().join("trace.txt");
    let scenario = fixtures().join("scenarios/golden.json");
    let out = nsscale(&["run", s(&scenario), "--state", s(&state), "--trace", s(&trace)]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&state).unwrap()).unwrap();
    assert_eq!(doc["ns_info"]["current_ns_il"], "NS-IL#3");
    assert_eq!(doc["outcome"], "completed");
    assert!(fs::read_to_string(&trace).unwrap().contains("ReserveRequest"));
}

#[test]
fn no_reservation_flag_drops_reserve_messages() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    let scenario = fixtures().join("scenarios/golden.json");
    let out = nsscale(&["run", s(&scenario), "--no-reservation", "--trace", s(&trace)]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.contains("AllocateRequest"));
    assert!(!text.contains("Reserve"));
}

#[test]
fn failed_operation_exits_with_three() {
    // Fill the only PoP right after the overload decision so the grant is denied.
    let dir = tempfile::tempdir().unwrap();
    let src = fixtures().join("scenarios/golden.json");
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&src).unwrap()).unwrap();
    doc["catalog_refs"] = serde_json::json!([s(&fixtures().join("fig4"))]);
    let occupy = |zone: &str, vcpu: u32| {
        serde_json::json!({
            "tick": 3,
            "occupy": { "pop": "pop-1", "zone": zone, "spec": { "vcpu": vcpu, "memory": 0, "storage": 0, "bandwidth": 0 } }
        })
    };
    doc["workload"]["events"] = serde_json::json!([occupy("z1", 58), occupy("z2", 64)]);
    let path = dir.path().join("squeeze.json");
    fs::write(&path, doc.to_string()).unwrap();
    let state = dir.path().join("state.json");
    let out = nsscale(&["run", s(&path), "--state", s(&state)]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let st: serde_json::Value = serde_json::from_str(&fs::read_to_string(&state).unwrap()).unwrap();
    assert_eq!(st["outcome"], "operation-failed");
    assert_eq!(st["ns_info"]["current_ns_il"], "NS-IL#1");
}

#[test]
fn graph_of_the_fixture_flavor() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("graph.json");
    let out = nsscale(&["graph", s(&fixtures().join("fig4")), "--flavor", "NsFlavor#1", "--out", s(&out_path)]);
    assert_eq!(code(&out), 0);
    let g: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(g["nodes"].as_array().unwrap().len(), 4);
    let edges = g["edges"].as_array().unwrap();
    assert_eq!(edges.len(), 12);
    let edge = edges
        .iter()
        .find(|e| e["from"] == "NS-IL#3" && e["to"] == "NS-IL#4")
        .unwrap();
    assert_eq!(edge["classification"], "add-vnf");
    assert_eq!(edge["profiles"][0]["profile"], "vnf-B");
    assert_eq!(edge["profiles"][0]["added"], 1);
}

#[test]
fn graph_of_a_single_level_flavor() {
    let dir = edited_catalog(|d| {
        let ils = d["flavors"][0]["ns_ils"].as_array_mut().unwrap();
        ils.truncate(1);
    });
    let out_path = dir.path().join("graph.out");
    let out = nsscale(&["graph", s(dir.path()), "--flavor", "NsFlavor#1", "--out", s(&out_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let g: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(g["nodes"].as_array().unwrap().len(), 1);
    assert!(g["edges"].as_array().unwrap().is_empty());
}

#[test]
fn graph_rejects_an_unknown_flavor() {
    let out = nsscale(&["graph", s(&fixtures().join("fig4")), "--flavor", "NsFlavor#9"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn explain_lists_every_candidate_at_the_overload_tick() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("explain.json");
    let scenario = fixtures().join("scenarios/golden.json");
    let out = nsscale(&["explain", s(&scenario), "--at", "0", "--out", s(&out_path)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("action: scale to NS-IL#3"));
    let x: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let c = x["candidates"].as_array().unwrap();
    assert_eq!(c.len(), 4);
    assert!(c.iter().all(|c| c["cost"].is_number() && c["feasible"].is_boolean()));
    assert_eq!(x["decision"]["target_ns_il"], "NS-IL#3");
    assert!(x["decision"]["estimate"].is_object());
    assert!(x["decision"]["placement"].is_object());

    // Byte-stable output.
    let again = dir.path().join("again.json");
    nsscale(&["explain", s(&scenario), "--at", "0", "--out", s(&again)]);
    assert_eq!(fs::read(&out_path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn explain_on_a_quiet_tick_takes_no_action() {
    let out = nsscale(&["explain", s(&fixtures().join("scenarios/quiet.json")), "--at", "5"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("action: none"));
}

#[test]
fn explain_beyond_the_horizon_is_an_error() {
    let out = nsscale(&["explain", s(&fixtures().join("scenarios/quiet.json")), "--at", "500"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));
}
