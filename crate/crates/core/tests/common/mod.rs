#![allow(dead_code)]

//! Shared helpers for the integration suites: a seeded scenario
//! generator and world-state checkers.

use rand::prelude::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hetsim_core::model::control::SubjectId;
use hetsim_core::model::pe::{ComponentState, ControlPlacement};
use hetsim_core::platform::plan::placement_conforms;
use hetsim_core::routing;
use hetsim_core::scenario::{parse_scenario, ScenarioSpec};
use hetsim_core::world::World;
use hetsim_core::HostClass;

/// Build a valid random scenario: one or two fixed hosts, a handful of
/// light and sensor hosts placed within radio reach of the existing
/// mesh, a small repository, a family of up to five pipelines and a few
/// scripted mishaps.
pub fn random_scenario(seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hosts = Vec::new();
    let mut positions: Vec<(f64, f64)> = Vec::new();

    let fixed_count = rng.random_range(1..=2);
    for i in 0..fixed_count {
        let position = (40.0 * i as f64, 0.0);
        positions.push(position);
        hosts.push(serde_json::json!({
            "id": format!("F{i}"),
            "class": "fixed",
            "position": [position.0, position.1],
            "radio_range": 25.0,
        }));
    }

    let place_near = |rng: &mut ChaCha8Rng, positions: &mut Vec<(f64, f64)>| {
        let anchor = positions[rng.random_range(0..positions.len())];
        let dx = rng.random_range(-15.0..15.0);
        let dy = rng.random_range(-15.0..15.0);
        let position = (anchor.0 + dx, anchor.1 + dy);
        positions.push(position);
        position
    };

    let light_count = rng.random_range(0..=3);
    for i in 0..light_count {
        let position = place_near(&mut rng, &mut positions);
        hosts.push(serde_json::json!({
            "id": format!("L{i}"),
            "class": "light",
            "position": [position.0, position.1],
            "radio_range": 25.0,
            "memory": rng.random_range(24..64),
            "battery": 2_000_000u64,
        }));
    }

    let sensor_count = rng.random_range(1..=4);
    for i in 0..sensor_count {
        let position = place_near(&mut rng, &mut positions);
        let capability = if rng.random_bool(0.5) {
            "infrared"
        } else {
            "camera"
        };
        hosts.push(serde_json::json!({
            "id": format!("S{i}"),
            "class": "sensor",
            "position": [position.0, position.1],
            "radio_range": 25.0,
            "memory": rng.random_range(24..48),
            "battery": 2_000_000u64,
            "capabilities": [capability],
            "package": ["sense-ir", "sense-cam"],
        }));
    }

    let repository = serde_json::json!([
        {"id": "sense-ir", "style": "event", "inputs": [], "outputs": ["raw"],
         "memory": rng.random_range(2..6), "cpu": rng.random_range(1..4),
         "category": {"sensing": {"capability": "infrared"}}},
        {"id": "sense-cam", "style": "event", "inputs": [], "outputs": ["raw"],
         "memory": rng.random_range(2..6), "cpu": rng.random_range(1..4),
         "category": {"sensing": {"capability": "camera"}}},
        {"id": "software-probe", "style": "event", "inputs": [], "outputs": ["raw"],
         "memory": rng.random_range(2..6), "cpu": 1, "category": "software"},
        {"id": "filter", "style": "method_call", "inputs": ["raw"], "outputs": ["refined"],
         "memory": rng.random_range(2..8), "cpu": rng.random_range(1..4), "category": "software",
         "body": {"kind": "downsample", "k": 2}},
        {"id": "collector", "style": "mailbox", "inputs": ["refined"], "outputs": [],
         "memory": rng.random_range(4..10), "cpu": 1, "category": "software"},
        {"id": "direct-collector", "style": "event", "inputs": ["raw"], "outputs": [],
         "memory": rng.random_range(4..10), "cpu": 1, "category": "software"}
    ]);

    let config_count = rng.random_range(1..=5);
    let mut configurations = Vec::new();
    for c in 0..config_count {
        let source_cm = ["sense-ir", "sense-cam", "software-probe"]
            .choose(&mut rng)
            .unwrap()
            .to_string();
        let source_bind = if source_cm == "software-probe" {
            if rng.random_bool(0.5) && light_count > 0 {
                serde_json::json!({"class": "light"})
            } else {
                serde_json::json!({"host": "F0"})
            }
        } else {
            serde_json::json!({"class": "sensor"})
        };
        let with_filter = rng.random_bool(0.5);
        let constraints: Vec<&str> = if rng.random_bool(0.3) {
            vec!["realtime"]
        } else {
            vec![]
        };
        let (nodes, edges) = if with_filter {
            let filter_bind = if light_count > 0 && rng.random_bool(0.5) {
                serde_json::json!({"class": "light"})
            } else {
                serde_json::json!({"host": "F0"})
            };
            (
                serde_json::json!([
                    {"id": "src", "cm": source_cm, "bind": source_bind},
                    {"id": "mid", "cm": "filter", "bind": filter_bind},
                    {"id": "dst", "cm": "collector", "bind": {"host": "F0"}}
                ]),
                serde_json::json!([
                    {"from": "src", "to": "mid", "constraints": constraints},
                    {"from": "mid", "to": "dst"}
                ]),
            )
        } else {
            (
                serde_json::json!([
                    {"id": "src", "cm": source_cm, "bind": source_bind},
                    {"id": "dst", "cm": "direct-collector", "bind": {"host": "F0"}}
                ]),
                serde_json::json!([{"from": "src", "to": "dst", "constraints": constraints}]),
            )
        };
        configurations.push(serde_json::json!({
            "id": format!("cfg-{c}"),
            "qos_level": rng.random_range(0..5),
            "nodes": nodes,
            "edges": edges,
        }));
    }

    let mut events = Vec::new();
    let host_ids: Vec<String> = hosts
        .iter()
        .map(|h| h["id"].as_str().unwrap().to_string())
        .collect();
    for _ in 0..rng.random_range(0..3) {
        let tick = rng.random_range(10..60);
        let victim = host_ids.choose(&mut rng).unwrap().clone();
        match rng.random_range(0..5) {
            0 if victim != "F0" => {
                events.push(serde_json::json!({"tick": tick, "kind": "fail_host", "host": victim}));
                if rng.random_bool(0.5) {
                    events.push(serde_json::json!({
                        "tick": tick + rng.random_range(5..20), "kind": "restore", "host": victim
                    }));
                }
            }
            1 => {
                let other = host_ids.choose(&mut rng).unwrap().clone();
                if other != victim {
                    events.push(serde_json::json!({"tick": tick, "kind": "fail_link", "a": victim, "b": other}));
                }
            }
            2 if victim != "F0" => {
                let x = rng.random_range(-30.0..70.0);
                let y = rng.random_range(-30.0..30.0);
                events.push(serde_json::json!({"tick": tick, "kind": "move_host", "host": victim, "position": [x, y]}));
            }
            _ => {
                if victim.starts_with('L') || victim.starts_with('S') {
                    events.push(serde_json::json!({
                        "tick": tick, "kind": "drain_battery", "host": victim,
                        "amount": rng.random_range(100..5000)
                    }));
                }
            }
        }
    }

    let doc = serde_json::json!({
        "params": {"seed": seed},
        "hosts": hosts,
        "repository": repository,
        "applications": [{
            "application": "generated",
            "supervisor": "F0",
            "configurations": configurations,
        }],
        "initial_application": "generated",
        "events": events,
    });
    parse_scenario(&doc.to_string()).expect("generated scenario must validate")
}

/// Check the per-class deployment rules for every live component, the
/// closed-world rule for sensors, and the fixed-host requirement for
/// every deported control fragment. Returns the first violation.
pub fn check_deployment_conformance(world: &World) -> Result<(), String> {
    for pe in world.pes.values() {
        if pe.state == ComponentState::Failed {
            continue;
        }
        if pe.placement.is_empty() {
            continue; // directly instantiated in tests, not platform-deployed
        }
        let subject = SubjectId::Pe(pe.id.clone());
        if !placement_conforms(world, &subject, &pe.host, &pe.placement) {
            return Err(format!(
                "{}: placement {:?} violates class rules",
                pe.id, pe.placement
            ));
        }
        let host = &world.hosts[&pe.host];
        if host.class == HostClass::Sensor && !host.preloaded_repository.contains(&pe.cm) {
            return Err(format!(
                "{}: component outside the preloaded package of {}",
                pe.id, pe.host
            ));
        }
        if let ControlPlacement::Split { logic_on, .. } = &pe.control {
            if world.hosts.get(logic_on).map(|h| h.class) != Some(HostClass::Fixed) {
                return Err(format!(
                    "{}: control logic on non-fixed host {logic_on}",
                    pe.id
                ));
            }
        }
    }
    for conduit in world.conduits.values() {
        if conduit.state == ComponentState::Failed || conduit.placement.is_empty() {
            continue;
        }
        let subject = SubjectId::Conduit(conduit.id.clone());
        if !placement_conforms(world, &subject, &conduit.source_host, &conduit.placement) {
            return Err(format!(
                "{}: placement {:?} violates class rules",
                conduit.id, conduit.placement
            ));
        }
        if let ControlPlacement::Split { logic_on, .. } = &conduit.control {
            if world.hosts.get(logic_on).map(|h| h.class) != Some(HostClass::Fixed) {
                return Err(format!(
                    "{}: conduit control on non-fixed host {logic_on}",
                    conduit.id
                ));
            }
        }
    }
    Ok(())
}

/// Every deported control fragment must sit on a live fixed host with a
/// route back to its stub.
pub fn check_control_channels(world: &World) -> Result<(), String> {
    let check = |subject: &str, control: &ControlPlacement| -> Result<(), String> {
        if let ControlPlacement::Split { stub_on, logic_on } = control {
            if !world.host_alive(stub_on) {
                return Ok(()); // dying host, component failed with it
            }
            if world.hosts.get(logic_on).map(|h| h.class) != Some(HostClass::Fixed) {
                return Err(format!("{subject}: logic on non-fixed host {logic_on}"));
            }
            if !world.host_alive(logic_on) {
                return Err(format!("{subject}: logic host {logic_on} is dead"));
            }
            if routing::route_lookup(world, stub_on, logic_on).is_none() {
                return Err(format!(
                    "{subject}: no route from stub {stub_on} to logic {logic_on}"
                ));
            }
        }
        Ok(())
    };
    for pe in world.pes.values() {
        if pe.state != ComponentState::Failed && !pe.unsupervised {
            check(pe.id.as_str(), &pe.control)?;
        }
    }
    Ok(())
}
