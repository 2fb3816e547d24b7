//! Scenario builders shared by the benchmarks: synthetic worlds of a
//! chosen size with a sensing-filter-collector pipeline family.

use hetsim_core::scenario::{parse_scenario, ScenarioSpec};

/// A mesh of one fixed host plus `sensors` sensor hosts and
/// `lights` light hosts, everything in mutual radio reach, with a
/// family of `configs` pipeline variants.
pub fn mesh_scenario(sensors: usize, lights: usize, configs: usize) -> ScenarioSpec {
    let mut hosts = vec![serde_json::json!({
        "id": "F0", "class": "fixed", "position": [0, 0], "radio_range": 500.0
    })];
    for i in 0..sensors {
        hosts.push(serde_json::json!({
            "id": format!("S{i:02}"), "class": "sensor",
            "position": [10.0 + i as f64, 5.0], "radio_range": 500.0,
            "memory": 64, "battery": 50_000_000u64,
            "capabilities": ["infrared"], "package": ["sense"]
        }));
    }
    for i in 0..lights {
        hosts.push(serde_json::json!({
            "id": format!("L{i:02}"), "class": "light",
            "position": [10.0 + i as f64, -5.0], "radio_range": 500.0,
            "memory": 64, "battery": 50_000_000u64
        }));
    }

    let repository = serde_json::json!([
        {"id": "sense", "style": "event", "inputs": [], "outputs": ["raw"],
         "memory": 4, "cpu": 1, "category": {"sensing": {"capability": "infrared"}}},
        {"id": "filter", "style": "method_call", "inputs": ["raw"], "outputs": ["refined"],
         "memory": 4, "cpu": 1, "category": "software", "body": {"kind": "downsample", "k": 2}},
        {"id": "collector", "style": "event", "inputs": ["refined"], "outputs": [],
         "memory": 8, "cpu": 1, "category": "software"}
    ]);

    let mut configurations = Vec::new();
    for c in 0..configs {
        let filter_bind = if lights > 0 && c % 2 == 0 {
            serde_json::json!({"class": "light"})
        } else {
            serde_json::json!({"host": "F0"})
        };
        configurations.push(serde_json::json!({
            "id": format!("cfg-{c:02}"),
            "qos_level": c,
            "nodes": [
                {"id": "src", "cm": "sense", "bind": {"class": "sensor"}},
                {"id": "mid", "cm": "filter", "bind": filter_bind},
                {"id": "dst", "cm": "collector", "bind": {"host": "F0"}}
            ],
            "edges": [
                {"from": "src", "to": "mid"},
                {"from": "mid", "to": "dst"}
            ]
        }));
    }

    let doc = serde_json::json!({
        "params": {"seed": 1},
        "hosts": hosts,
        "repository": repository,
        "applications": [{
            "application": "bench",
            "supervisor": "F0",
            "configurations": configurations
        }],
        "initial_application": "bench"
    });
    parse_scenario(&doc.to_string()).expect("bench scenario must validate")
}
