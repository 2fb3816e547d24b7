//! End-to-end runs of the shipped scenarios, checked against the event
//! log and the final world state.

use std::path::PathBuf;

use hetsim_core::engine::{self, Sim};
use hetsim_core::ids::{HostId, PeId};
use hetsim_core::log::LogKind;
use hetsim_core::model::pe::{ComponentState, ControlPlacement};
use hetsim_core::routing;
use hetsim_core::scenario::{load_scenario, parse_scenario};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

const MINIMAL: &str = r#"{
    "hosts": [{"id": "F1", "class": "fixed", "position": [0, 0]}],
    "repository": [
        {"id": "mon", "style": "event", "inputs": [], "outputs": ["beat"],
         "memory": 2, "cpu": 1, "category": "software"}
    ],
    "applications": [{
        "application": "app",
        "supervisor": "F1",
        "configurations": [{
            "id": "only",
            "qos_level": 1,
            "nodes": [{"id": "m", "cm": "mon", "bind": {"host": "F1"}}]
        }]
    }],
    "initial_application": "app"
}"#;

#[test]
fn empty_world_tick_produces_only_the_marker() {
    let spec = parse_scenario(
        r#"{
            "hosts": [{"id": "F1", "class": "fixed", "position": [0, 0]}],
            "applications": [{
                "application": "app", "supervisor": "F1",
                "configurations": [{"id": "noop", "qos_level": 0, "nodes": [
                    {"id": "x", "cm": "ghost", "bind": {"host": "F1"}}
                ]}]
            }],
            "repository": [{"id": "ghost", "style": "event", "inputs": [], "outputs": ["o"],
                            "memory": 1, "cpu": 0, "category": "software"}],
            "initial_application": "app"
        }"#,
    )
    .unwrap();
    let mut sim = Sim::from_spec(&spec, None).unwrap();
    // Strip the application so the world is genuinely empty.
    sim.world.platform.apps.clear();
    let records = sim.advance_tick();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].kind, LogKind::TickMarker);
    assert_eq!(records[0].tick, 0);
}

#[test]
fn minimal_scenario_deploys_and_stays_stable() {
    let spec = parse_scenario(MINIMAL).unwrap();
    let (sim, records, summary) = engine::run(&spec, 200, None, std::io::sink()).unwrap();
    let completes: Vec<_> = records
        .iter()
        .filter(|r| r.kind == LogKind::ReconfigurationComplete)
        .collect();
    assert_eq!(completes.len(), 1, "exactly the initial deployment");
    assert_eq!(completes[0].detail("trigger"), Some("initial"));
    assert_eq!(summary.reconfigurations, 0);
    let pe = sim
        .world
        .pes
        .get(&PeId::from("pe:mon@F1"))
        .expect("monitor deployed");
    assert_eq!(pe.state, ComponentState::Running);
    // The source component has been emitting.
    assert!(sim.world.counters.emitted > 100);
}

#[test]
fn telesurveillance_fails_over_to_the_nearest_camera() {
    let spec = load_scenario(&scenario_path("telesurveillance.json")).unwrap();
    assert_eq!(
        spec.hosts
            .iter()
            .filter(|h| h.capabilities.contains("infrared"))
            .count(),
        3
    );
    assert_eq!(
        spec.hosts
            .iter()
            .filter(|h| h.capabilities.contains("camera"))
            .count(),
        2
    );

    let (sim, records, summary) = engine::run(&spec, 200, None, std::io::sink()).unwrap();

    let completes: Vec<_> = records
        .iter()
        .filter(|r| r.kind == LogKind::ReconfigurationComplete)
        .collect();
    assert_eq!(
        completes.len(),
        2,
        "initial deployment plus exactly one failover"
    );
    assert_eq!(completes[0].detail("config"), Some("ir-primary"));
    assert_eq!(completes[1].detail("config"), Some("cam-fallback"));
    // In a mesh the routing service notices the dying path (hop change,
    // then loss); either signal legitimately drives the failover.
    assert!(matches!(
        completes[1].detail("trigger"),
        Some("route_alert") | Some("route_info")
    ));
    let decision = completes[1]
        .detail("decision_tick")
        .unwrap()
        .parse::<u64>()
        .unwrap();
    assert!(
        (50..=53).contains(&decision),
        "reaction within K + diameter of the failure"
    );
    assert_eq!(summary.reconfigurations, 1);

    // The detection component ends up on the nearest camera sensor, from
    // its preloaded package.
    let det = sim
        .world
        .pes
        .get(&PeId::from("pe:cam-detect@C1"))
        .expect("camera detection deployed");
    assert_eq!(det.state, ComponentState::Running);
    assert_eq!(det.host, HostId::from("C1"));

    // Deliveries to the analysis component resume after the failover.
    let completion_tick = completes[1].tick;
    assert!(
        records.iter().any(|r| {
            r.kind == LogKind::FrameDelivered
                && r.tick > completion_tick
                && r.tick <= completion_tick + 10
                && r.detail("flow") == Some("detect")
        }),
        "detection frames resume within 10 ticks of completion"
    );

    // Closed world: every container creation targets a host that has the
    // component in reach (sensor packages respected).
    for record in records
        .iter()
        .filter(|r| r.kind == LogKind::CreateContainer)
    {
        let summary = record.detail("summary").unwrap();
        for sensor in sim
            .world
            .hosts
            .values()
            .filter(|h| h.class == hetsim_core::HostClass::Sensor)
        {
            if summary.contains(&format!("on {}", sensor.id)) {
                let cm = summary.split_whitespace().next().unwrap();
                assert!(
                    sensor.preloaded_repository.contains(&cm.into()),
                    "{cm} deployed on {} without being packaged",
                    sensor.id
                );
            }
        }
    }
}

#[test]
fn identical_runs_produce_identical_logs() {
    let spec = load_scenario(&scenario_path("telesurveillance.json")).unwrap();
    let mut log_a: Vec<u8> = Vec::new();
    let mut log_b: Vec<u8> = Vec::new();
    engine::run(&spec, 120, Some(42), &mut log_a).unwrap();
    engine::run(&spec, 120, Some(42), &mut log_b).unwrap();
    assert!(!log_a.is_empty());
    assert_eq!(
        log_a, log_b,
        "same scenario and seed must be byte-identical"
    );

    let mut log_c: Vec<u8> = Vec::new();
    engine::run(&spec, 120, Some(43), &mut log_c).unwrap();
    assert_ne!(
        log_a, log_c,
        "different seeds should differ in payload digests"
    );
}

#[test]
fn moving_a_light_host_migrates_its_deported_control_unit() {
    let spec = load_scenario(&scenario_path("orphan_migration.json")).unwrap();
    let (sim, records, _) = engine::run(&spec, 120, None, std::io::sink()).unwrap();

    // The component still runs on L1 with its control logic now on F2.
    let pe = sim
        .world
        .pes
        .get(&PeId::from("pe:field-monitor@L1"))
        .expect("monitor survives");
    assert_eq!(pe.state, ComponentState::Running);
    match &pe.control {
        ControlPlacement::Split { stub_on, logic_on } => {
            assert_eq!(stub_on, &HostId::from("L1"));
            assert_eq!(logic_on, &HostId::from("F2"));
        }
        other => panic!("expected split control, got {other:?}"),
    }
    assert_eq!(
        sim.world.platform.correspondents[&HostId::from("L1")],
        HostId::from("F2")
    );

    // MIGRATE_UC appears in the log, and a live route connects stub and
    // logic afterwards.
    assert!(records.iter().any(|r| r.kind == LogKind::MigrateUc));
    assert!(routing::route_lookup(&sim.world, &"L1".into(), &"F2".into()).is_some());

    // The adopted control logic is charged on F2. F1 is alive but
    // unreachable from everyone, so its copy is abandoned in place.
    let logic = sim.world.params.footprints.control_full;
    assert_eq!(sim.world.hosts[&HostId::from("F2")].memory_used, logic);
    assert_eq!(sim.world.hosts[&HostId::from("F1")].memory_used, logic);
}

#[test]
fn dead_correspondent_fragments_are_recreated_not_destroyed() {
    // Both fixed hosts are in reach; the lower id wins the correspondent
    // role, then dies. Matches the dead-correspondent migration rule:
    // fragments reappear on F2, nothing is destroyed on F1.
    let spec = parse_scenario(
        r#"{
        "hosts": [
            {"id": "F1", "class": "fixed", "position": [0, 0], "radio_range": 20},
            {"id": "F2", "class": "fixed", "position": [10, 10], "radio_range": 20},
            {"id": "L1", "class": "light", "position": [5, 0], "radio_range": 20, "memory": 40}
        ],
        "repository": [
            {"id": "field-monitor", "style": "event", "inputs": [], "outputs": ["reading"],
             "memory": 6, "cpu": 2, "category": "software"}
        ],
        "applications": [{
            "application": "field", "supervisor": "F2",
            "configurations": [{
                "id": "only", "qos_level": 1,
                "nodes": [{"id": "mon", "cm": "field-monitor", "bind": {"host": "L1"}}]
            }]
        }],
        "initial_application": "field",
        "events": [{"tick": 40, "kind": "fail_host", "host": "F1"}]
    }"#,
    )
    .unwrap();
    let (sim, records, _) = engine::run(&spec, 100, None, std::io::sink()).unwrap();

    assert_eq!(
        sim.world.platform.correspondents[&HostId::from("L1")],
        HostId::from("F2")
    );
    let pe = &sim.world.pes[&PeId::from("pe:field-monitor@L1")];
    match &pe.control {
        ControlPlacement::Split { logic_on, .. } => assert_eq!(logic_on, &HostId::from("F2")),
        other => panic!("expected split control, got {other:?}"),
    }
    assert!(records.iter().any(|r| r.kind == LogKind::MigrateUc));
    // No destroy was ever addressed to the dead F1.
    assert!(!records
        .iter()
        .any(|r| r.kind == LogKind::DestroyContainer && r.detail("dst") == Some("F1")));
}

#[test]
fn battery_exhaustion_kills_the_host_and_its_links() {
    // A host holding 5 energy units facing a 10-unit activation dies in
    // that very tick's reconciliation, and its links go down with it.
    let spec = parse_scenario(
        r#"{
        "hosts": [
            {"id": "F1", "class": "fixed", "position": [0, 0], "radio_range": 15},
            {"id": "L1", "class": "light", "position": [10, 0], "radio_range": 15,
             "memory": 40, "battery": 1000000}
        ],
        "repository": [
            {"id": "hungry", "style": "event", "inputs": [], "outputs": ["beat"],
             "memory": 4, "cpu": 10, "category": "software"}
        ],
        "applications": [{
            "application": "app", "supervisor": "F1",
            "configurations": [{
                "id": "only", "qos_level": 1,
                "nodes": [{"id": "h", "cm": "hungry", "bind": {"host": "L1"}}]
            }]
        }],
        "initial_application": "app"
    }"#,
    )
    .unwrap();
    let mut sim = Sim::from_spec(&spec, None).unwrap();
    for _ in 0..20 {
        sim.advance_tick();
    }
    let l1: HostId = "L1".into();
    assert_eq!(
        sim.world.pes[&PeId::from("pe:hungry@L1")].state,
        ComponentState::Running
    );
    assert!(sim.world.hosts[&l1].alive);

    // Shrink the remaining battery to 5 units; the next activation costs 10.
    {
        let host = sim.world.hosts.get_mut(&l1).unwrap();
        host.battery_granted = host.ledger.total() + 5;
        assert_eq!(host.battery(), 5);
    }
    let records = sim.advance_tick();
    let died = records
        .iter()
        .find(|r| r.kind == LogKind::HostDied && r.host == "L1")
        .expect("host must die in the activation tick");
    assert_eq!(died.detail("cause"), Some("battery_exhausted"));
    assert!(!sim.world.hosts[&l1].alive);
    assert!(sim.world.hosts[&l1].battery() <= 0);
    assert!(sim.world.link_kind(&"F1".into(), &l1).is_none());
    assert_eq!(
        sim.world.pes[&PeId::from("pe:hungry@L1")].state,
        ComponentState::Failed
    );
}

#[test]
fn stranded_light_host_marks_components_unsupervised_and_keeps_running() {
    // L1 wanders into the void: no fixed host in reach, so the control
    // unit cannot be re-homed; the component keeps producing locally.
    let spec = parse_scenario(
        r#"{
        "hosts": [
            {"id": "F1", "class": "fixed", "position": [0, 0], "radio_range": 20},
            {"id": "L1", "class": "light", "position": [10, 0], "radio_range": 20,
             "memory": 40, "battery": 1000000}
        ],
        "repository": [
            {"id": "field-monitor", "style": "event", "inputs": [], "outputs": ["reading"],
             "memory": 6, "cpu": 2, "category": "software"}
        ],
        "applications": [{
            "application": "field", "supervisor": "F1",
            "configurations": [{
                "id": "only", "qos_level": 1,
                "nodes": [{"id": "mon", "cm": "field-monitor", "bind": {"host": "L1"}}]
            }]
        }],
        "initial_application": "field",
        "events": [{"tick": 40, "kind": "move_host", "host": "L1", "position": [500, 500]}]
    }"#,
    )
    .unwrap();
    let (sim, _, _) = engine::run(&spec, 80, None, std::io::sink()).unwrap();
    let pe = &sim.world.pes[&PeId::from("pe:field-monitor@L1")];
    assert!(pe.unsupervised, "no correspondent in reach: unsupervised");
    assert_eq!(
        pe.state,
        ComponentState::Running,
        "data flow continues locally"
    );
    assert!(pe.staged_count() > 0, "frames keep being produced");
}

/// Destroying a conduit drops whatever it still buffers, visibly: two
/// frames parked in the buffer yield exactly two dropped-frame records.
#[test]
fn conduit_destruction_counts_buffered_frames_as_dropped() {
    use hetsim_core::model::conduit::TransportPolicy;
    use hetsim_core::model::descriptor::*;
    use hetsim_core::model::frame::DataFrame;
    use hetsim_core::world::{Host, World};
    use hetsim_core::SimParams;

    let mut world = World::new(SimParams::default());
    world.hosts.insert(
        "H1".into(),
        Host {
            id: "H1".into(),
            class: hetsim_core::HostClass::Fixed,
            position: (0.0, 0.0),
            radio_range: None,
            memory_capacity: 1000,
            memory_used: 0,
            battery_granted: 0,
            initial_battery: 0,
            ledger: Default::default(),
            sensing_capabilities: Default::default(),
            preloaded_repository: Default::default(),
            alive: true,
        },
    );
    world.routing.insert("H1".into(), Default::default());
    for (id, inputs, outputs) in [("src", 0, 1), ("dst", 1, 0)] {
        world.repository.insert(
            id.into(),
            BusinessComponentDescriptor {
                id: id.into(),
                interaction_style: InteractionStyle::Event,
                input_flows: (0..inputs).map(|_| PortSpec::Single("x".into())).collect(),
                output_flows: (0..outputs).map(|_| PortSpec::Single("x".into())).collect(),
                memory_footprint: 2,
                cpu_cost: 1,
                category: Category::Software,
                body: Body::PassThrough,
            },
        );
    }
    world
        .instantiate_pe(
            "pe:src@H1".into(),
            &"src".into(),
            &"H1".into(),
            ControlPlacement::Local,
        )
        .unwrap();
    world
        .instantiate_pe(
            "pe:dst@H1".into(),
            &"dst".into(),
            &"H1".into(),
            ControlPlacement::Local,
        )
        .unwrap();
    world
        .connect(
            "cd:x".into(),
            &"pe:src@H1".into(),
            &"out0".into(),
            &"pe:dst@H1".into(),
            &"in0".into(),
            vec!["x".into()],
            TransportPolicy::Fifo,
            ControlPlacement::Local,
        )
        .unwrap();
    for seq in 1..=2 {
        world.counters.emitted += 1;
        world
            .conduits
            .get_mut(&"cd:x".into())
            .unwrap()
            .accept(DataFrame {
                flow: "x".into(),
                seq,
                producer: "pe:src@H1".into(),
                payload_size: 10,
                produced_tick: 0,
                payload_digest: seq,
            });
    }
    let lost = world.disconnect(&"cd:x".into()).unwrap();
    world.drop_frames(lost, "conduit_destroyed");

    assert_eq!(world.counters.dropped, 2);
    let drop_records: Vec<_> = world
        .log_buffer
        .iter()
        .filter(|r| {
            r.kind == LogKind::FrameDropped && r.detail("reason") == Some("conduit_destroyed")
        })
        .collect();
    assert_eq!(drop_records.len(), 2);
}

/// Stats totals equal an independent recount from the raw records.
#[test]
fn stats_totals_match_independent_recount() {
    let spec = load_scenario(&scenario_path("telesurveillance.json")).unwrap();
    let (sim, records, _) = engine::run(&spec, 120, None, std::io::sink()).unwrap();
    let text: String = records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    let report = hetsim_core::stats::stats_from_text(&text).unwrap();

    let delivered_records = records
        .iter()
        .filter(|r| r.kind == LogKind::FrameDelivered)
        .count() as u64;
    let dropped_records = records
        .iter()
        .filter(|r| matches!(r.kind, LogKind::FrameDropped | LogKind::Backpressure))
        .count() as u64;
    assert_eq!(report.frames_delivered, delivered_records);
    assert_eq!(report.frames_dropped, dropped_records);
    assert_eq!(report.frames_delivered, sim.world.counters.delivered);

    let completions = records
        .iter()
        .filter(|r| {
            r.kind == LogKind::ReconfigurationComplete && r.detail("trigger") != Some("initial")
        })
        .count() as u64;
    assert_eq!(report.reconfigurations, completions);

    // Energy in the final marker equals the world ledgers.
    for (host, (tx, rx, cpu)) in &report.energy {
        let ledger = sim.world.hosts[&HostId::from(host.as_str())].ledger;
        assert_eq!(
            (ledger.consumed_tx, ledger.consumed_rx, ledger.consumed_cpu),
            (*tx, *rx, *cpu)
        );
    }
}

#[test]
fn container_adapter_follows_the_interaction_style() {
    use hetsim_core::model::descriptor::InteractionStyle;
    let spec = parse_scenario(
        r#"{
        "hosts": [{"id": "F1", "class": "fixed", "position": [0, 0]}],
        "repository": [
            {"id": "src", "style": "event", "inputs": [], "outputs": ["x"],
             "memory": 2, "cpu": 1, "category": "software"},
            {"id": "box", "style": "mailbox", "inputs": ["x"], "outputs": [],
             "memory": 2, "cpu": 1, "category": "software"}
        ],
        "applications": [{
            "application": "app", "supervisor": "F1",
            "configurations": [{
                "id": "only", "qos_level": 1,
                "nodes": [
                    {"id": "s", "cm": "src", "bind": {"host": "F1"}},
                    {"id": "b", "cm": "box", "bind": {"host": "F1"}}
                ],
                "edges": [{"from": "s", "to": "b"}]
            }]
        }],
        "initial_application": "app"
    }"#,
    )
    .unwrap();
    let (sim, _, _) = engine::run(&spec, 20, None, std::io::sink()).unwrap();
    assert_eq!(
        sim.world.pes[&PeId::from("pe:box@F1")].adapter,
        InteractionStyle::Mailbox
    );
    assert_eq!(
        sim.world.pes[&PeId::from("pe:src@F1")].adapter,
        InteractionStyle::Event
    );
}

#[test]
fn light_host_deployment_saves_memory_versus_full_local_control() {
    let spec = load_scenario(&scenario_path("orphan_migration.json")).unwrap();
    let (sim, _, _) = engine::run(&spec, 20, None, std::io::sink()).unwrap();
    let params = &sim.world.params;
    let light_use = sim.world.hosts[&HostId::from("L1")].memory_used;
    let footprint =
        sim.world.repository[&hetsim_core::CmId::from("field-monitor")].memory_footprint;
    let hypothetical_full_local = footprint
        + params.footprints.input_unit
        + params.footprints.output_unit
        + params.footprints.control_full;
    assert!(light_use < hypothetical_full_local);
    assert_eq!(
        light_use,
        footprint
            + params.footprints.input_unit
            + params.footprints.output_unit
            + params.footprints.control_stub
    );
}
