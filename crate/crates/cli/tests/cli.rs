//! End-to-end checks of the binary: subcommands, exit codes, log files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hetsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hetsim"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    hetsim().args(args).output().expect("binary runs")
}

#[test]
fn validate_accepts_the_shipped_scenarios() {
    for name in [
        "telesurveillance.json",
        "relay_cut.json",
        "orphan_migration.json",
    ] {
        let out = run(&["validate", scenario(name).to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("ok:"), "{text}");
    }
}

#[test]
fn validate_rejects_bad_scenarios_with_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"hosts": [], "bogus": true}"#).unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn run_writes_a_log_file_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("run.jsonl");
    let out = run(&[
        "run",
        scenario("telesurveillance.json").to_str().unwrap(),
        "--ticks",
        "60",
        "--log",
        log_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = String::from_utf8_lossy(&out.stdout);
    assert!(summary.contains("final configuration"), "{summary}");
    assert!(summary.contains("frames:"));

    let log = std::fs::read_to_string(&log_path).unwrap();
    assert!(log.lines().count() > 60);
    // Every line parses as a record.
    let records = hetsim_core::log::parse_log(&log).unwrap();
    assert_eq!(records.last().unwrap().tick, 59);
}

#[test]
fn run_streams_jsonl_to_stdout_by_default() {
    let out = run(&[
        "run",
        scenario("relay_cut.json").to_str().unwrap(),
        "--ticks",
        "20",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.lines().all(|l| l.starts_with('{')),
        "stdout must be pure JSONL"
    );
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("frames:"),
        "summary goes to stderr"
    );
}

#[test]
fn identical_seeds_give_identical_log_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for path in [&a, &b] {
        let out = run(&[
            "run",
            scenario("relay_cut.json").to_str().unwrap(),
            "--ticks",
            "80",
            "--seed",
            "5",
            "--log",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn oracle_prints_a_ranking_that_matches_the_initial_deployment() {
    let out = run(&[
        "oracle",
        scenario("telesurveillance.json").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let first_rank = text
        .lines()
        .find(|l| l.trim_start().starts_with('1'))
        .unwrap();
    assert!(first_rank.contains("ir-primary"), "{text}");
    assert!(first_rank.contains("valid"));

    // After the failure the ranking flips to the camera configuration.
    let out = run(&[
        "oracle",
        scenario("telesurveillance.json").to_str().unwrap(),
        "--tick",
        "60",
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    let first_rank = text
        .lines()
        .find(|l| l.trim_start().starts_with('1'))
        .unwrap();
    assert!(first_rank.contains("cam-fallback"), "{text}");
}

/// An eight-configuration family over the surveillance topology: the
/// configuration the run deploys first is exactly the oracle's rank 1.
#[test]
fn oracle_agrees_with_selection_on_a_larger_family() {
    let base = std::fs::read_to_string(scenario("telesurveillance.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&base).unwrap();
    let configs = doc["applications"][0]["configurations"]
        .as_array_mut()
        .unwrap();
    configs.clear();
    for (i, (cm, level, constraint)) in [
        ("ir-detect", 5, serde_json::json!([])),
        ("ir-detect", 4, serde_json::json!(["realtime"])),
        ("cam-detect", 4, serde_json::json!([])),
        ("cam-detect", 3, serde_json::json!(["realtime"])),
        ("ir-detect", 2, serde_json::json!([])),
        ("cam-detect", 2, serde_json::json!([])),
        ("ir-detect", 1, serde_json::json!([])),
        ("cam-detect", 1, serde_json::json!(["realtime"])),
    ]
    .iter()
    .enumerate()
    {
        configs.push(serde_json::json!({
            "id": format!("variant-{i}"),
            "qos_level": level,
            "nodes": [
                {"id": "det", "cm": cm, "bind": {"class": "sensor"}},
                {"id": "ana", "cm": "video-analysis", "bind": {"host": "F1"}}
            ],
            "edges": [{"from": "det", "to": "ana", "constraints": constraint}]
        }));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eight.json");
    std::fs::write(&path, doc.to_string()).unwrap();

    let out = run(&["oracle", path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.contains("variant-")).count(), 8);
    let top = text
        .lines()
        .find(|l| l.trim_start().starts_with('1'))
        .unwrap()
        .to_owned();

    let log = dir.path().join("run.jsonl");
    let out = run(&[
        "run",
        path.to_str().unwrap(),
        "--ticks",
        "30",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let deployed = String::from_utf8_lossy(&out.stdout)
        .lines()
        .find(|l| l.contains("final configuration"))
        .unwrap()
        .rsplit(' ')
        .next()
        .unwrap()
        .to_owned();
    assert!(
        top.contains(&deployed),
        "oracle rank 1 ({top}) vs deployed ({deployed})"
    );
}

#[test]
fn stats_summarizes_a_run_log() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("run.jsonl");
    let out = run(&[
        "run",
        scenario("telesurveillance.json").to_str().unwrap(),
        "--ticks",
        "100",
        "--log",
        log_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let out = run(&["stats", log_path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("reconfigurations: 1 complete"), "{text}");
    assert!(text.contains("configuration timeline:"));
    assert!(text.contains("cam-fallback"));
    assert!(text.contains("energy per host"));
    // Non-trivial energy on the active camera sensor.
    assert!(
        text.lines().any(|l| l.trim_start().starts_with("C1:")),
        "{text}"
    );
}

#[test]
fn stats_rejects_garbage_with_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.log");
    std::fs::write(&path, "not a log\n").unwrap();
    let out = run(&["stats", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_scenario_file_is_a_runtime_fault() {
    let out = run(&["run", "/nonexistent/nowhere.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_round_trip_via_parse_is_stable() {
    // load -> serialize -> load fixed point, on the shipped scenarios.
    for name in [
        "telesurveillance.json",
        "relay_cut.json",
        "orphan_migration.json",
    ] {
        let spec =
            hetsim_core::scenario::load_scenario(Path::new(scenario(name).to_str().unwrap()))
                .unwrap();
        let json = spec.to_json();
        let reparsed = hetsim_core::scenario::parse_scenario(&json).unwrap();
        assert_eq!(spec, reparsed, "{name}");
        assert_eq!(reparsed.to_json(), json, "{name}");
    }
}
