//! The simulation driver: builds a world from a scenario and advances it
//! tick by tick through a fixed phase order — deliver traffic, run
//! routing, run the platform (priority messages first), step components
//! in id order, inject scripted events, reconcile batteries, and finally
//! stamp the tick marker.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::Result;
use crate::ids::{AppId, ConduitId, HostId, PeId};
use crate::log::{EventLogRecord, LogKind, LogWriter};
use crate::model::frame::{source_digest, DataFrame};
use crate::params::SimParams;
use crate::platform;
use crate::platform::state::AppSupervisor;
use crate::routing;
use crate::scenario::{EventAction, ScenarioEvent, ScenarioSpec};
use crate::world::{host::FIXED_HOST_DEFAULT_MEMORY, EnergyKind, Host, HostClass, World};

/// Default memory for light and sensor hosts when the scenario is silent.
const CONSTRAINED_HOST_DEFAULT_MEMORY: u64 = 64;
/// Default battery for light and sensor hosts when the scenario is silent.
const DEFAULT_BATTERY: u64 = 1_000_000;

pub struct Sim {
    pub world: World,
    events: BTreeMap<u64, Vec<EventAction>>,
}

impl Sim {
    /// Materialize a validated scenario. The routing layer starts
    /// converged: the network is assumed up before the application is.
    pub fn from_spec(spec: &ScenarioSpec, seed_override: Option<u64>) -> Result<Sim> {
        let mut params: SimParams = spec.sim_params()?;
        if let Some(seed) = seed_override {
            params.seed = seed;
        }
        let mut world = World::new(params);

        for host_spec in &spec.hosts {
            let memory = host_spec
                .memory
                .map(|m| m as u64)
                .unwrap_or(match host_spec.class {
                    HostClass::Fixed => FIXED_HOST_DEFAULT_MEMORY,
                    _ => CONSTRAINED_HOST_DEFAULT_MEMORY,
                });
            let battery = host_spec
                .battery
                .map(|b| b as u64)
                .unwrap_or(DEFAULT_BATTERY);
            world.hosts.insert(
                host_spec.id.clone(),
                Host {
                    id: host_spec.id.clone(),
                    class: host_spec.class,
                    position: host_spec.position,
                    radio_range: host_spec.radio_range,
                    memory_capacity: memory,
                    memory_used: 0,
                    battery_granted: battery,
                    initial_battery: battery,
                    ledger: Default::default(),
                    sensing_capabilities: host_spec.capabilities.clone(),
                    preloaded_repository: host_spec.package.clone(),
                    alive: true,
                },
            );
            world
                .routing
                .insert(host_spec.id.clone(), Default::default());
        }
        for (a, b) in &spec.links {
            world.wired_links.insert(crate::world::norm_pair(a, b));
        }
        for descriptor in &spec.repository {
            world
                .repository
                .insert(descriptor.id.clone(), descriptor.clone());
        }
        for family in &spec.applications {
            world.platform.apps.insert(
                family.app.clone(),
                AppSupervisor::new(
                    family.app.clone(),
                    family.supervisor.clone(),
                    family.clone(),
                ),
            );
        }
        routing::init_converged(&mut world);

        let mut events: BTreeMap<u64, Vec<EventAction>> = BTreeMap::new();
        for ScenarioEvent { tick, action } in &spec.events {
            events.entry(*tick).or_default().push(action.clone());
        }
        Ok(Sim { world, events })
    }

    /// Run one tick; returns the records it produced.
    pub fn advance_tick(&mut self) -> Vec<EventLogRecord> {
        self.advance_tick_inner(false)
    }

    fn advance_tick_inner(&mut self, final_tick: bool) -> Vec<EventLogRecord> {
        let world = &mut self.world;
        let tick = world.clock.tick;

        // 1. In-flight messages advance one hop.
        world.deliver_transit();

        // 2. Routing: hellos, floods, table recomputation.
        let deltas = routing::routing_phase(world);

        // 3. Platform services, priority messages first.
        platform::platform_phase(world, deltas);

        // 4. Components in id order, processors before conduits.
        let pe_ids: Vec<PeId> = world.pes.keys().cloned().collect();
        for pe_id in pe_ids {
            world.pe_step(&pe_id);
        }
        let conduit_ids: Vec<ConduitId> = world.conduits.keys().cloned().collect();
        for conduit_id in conduit_ids {
            world.conduit_step(&conduit_id);
        }

        // 5. Scripted events.
        if let Some(actions) = self.events.get(&tick).cloned() {
            for action in actions {
                apply_event(world, action);
            }
        }

        // 6. Battery reconciliation: drained hosts die, links drop.
        let drained: Vec<HostId> = world
            .hosts
            .values()
            .filter(|h| h.alive && h.class != HostClass::Fixed && h.battery() <= 0)
            .map(|h| h.id.clone())
            .collect();
        for host in drained {
            world.kill_host(&host, "battery_exhausted");
        }

        // Tick marker closes the tick; the final one carries per-host
        // energy totals for offline statistics.
        let mut details: Vec<(String, String)> = vec![
            ("emitted".to_owned(), world.counters.emitted.to_string()),
            ("delivered".to_owned(), world.counters.delivered.to_string()),
            ("dropped".to_owned(), world.counters.dropped.to_string()),
            ("buffered".to_owned(), world.buffered_frames().to_string()),
        ];
        if final_tick {
            for (host_id, host) in &world.hosts {
                details.push((format!("tx:{host_id}"), host.ledger.consumed_tx.to_string()));
                details.push((format!("rx:{host_id}"), host.ledger.consumed_rx.to_string()));
                details.push((
                    format!("cpu:{host_id}"),
                    host.ledger.consumed_cpu.to_string(),
                ));
                details.push((
                    format!("battery:{host_id}"),
                    if host.class == HostClass::Fixed {
                        "inf".to_owned()
                    } else {
                        host.battery().to_string()
                    },
                ));
            }
        }
        world.log_global_owned(LogKind::TickMarker, details);

        world.clock.tick += 1;
        std::mem::take(&mut world.log_buffer)
    }
}

fn apply_event(world: &mut World, action: EventAction) {
    match action {
        EventAction::FailLink { a, b } => {
            let _ = world.fail_link(&a, &b);
        }
        EventAction::FailHost { host } => {
            world.kill_host(&host, "fail_host");
        }
        EventAction::RestoreHost { host } => {
            if world.restore_host(&host).is_ok() {
                reboot_cleanup(world, &host);
            }
        }
        EventAction::RestoreLink { a, b } => {
            let _ = world.restore_link(&a, &b);
        }
        EventAction::MoveHost { host, position } => {
            let _ = world.move_host(&host, position);
        }
        EventAction::DrainBattery { host, amount } => {
            world.charge_energy(&host, EnergyKind::Cpu, amount);
        }
        EventAction::InjectFrame { pe, flow, bytes } => inject_frame(world, pe, flow, bytes),
        EventAction::SetParam { key, value } => set_param(world, &key, value),
    }
}

/// A restored host comes back as from a reboot: the remains of
/// components that failed with it are cleared, freeing their memory and
/// ports for redeployment.
fn reboot_cleanup(world: &mut World, host: &HostId) {
    use crate::model::pe::ComponentState;
    let failed_pes: Vec<PeId> = world
        .pes
        .values()
        .filter(|pe| &pe.host == host && pe.state == ComponentState::Failed)
        .map(|pe| pe.id.clone())
        .collect();
    for pe in failed_pes {
        crate::platform::factory::purge_pe(world, &pe, "host_restored");
    }
    let failed_conduits: Vec<ConduitId> = world
        .conduits
        .values()
        .filter(|c| {
            c.state == ComponentState::Failed && (&c.source_host == host || &c.target_host == host)
        })
        .map(|c| c.id.clone())
        .collect();
    for conduit in failed_conduits {
        crate::platform::factory::purge_conduit(world, &conduit, "host_restored");
    }
}

/// Feed a synthetic frame into a processor, either as fresh output (the
/// flow belongs to an output port) or as arrived input.
fn inject_frame(world: &mut World, pe_id: PeId, flow: crate::ids::FlowId, bytes: Option<u64>) {
    let seed = world.params.seed;
    let default_bytes = world.params.default_frame_bytes;
    let mailbox_capacity = world.params.mailbox_capacity;
    let tick = world.clock.tick;
    let Some(pe) = world.pes.get_mut(&pe_id) else {
        // Frame never enters the system; account an emit+drop pair so
        // conservation still holds and the mistake is visible.
        world.counters.emitted += 1;
        world.counters.dropped += 1;
        world.log_global(
            LogKind::FrameDropped,
            vec![
                ("reason", "inject_unknown_pe".to_owned()),
                ("pe", pe_id.to_string()),
                ("flow", flow.to_string()),
            ],
        );
        return;
    };

    let seq = {
        let counter = pe.next_seq.entry(flow.clone()).or_insert(0);
        *counter += 1;
        *counter
    };
    let frame = DataFrame {
        flow: flow.clone(),
        seq,
        producer: pe_id.clone(),
        payload_size: bytes.unwrap_or(default_bytes),
        produced_tick: tick,
        payload_digest: source_digest(seed, &pe_id, &flow, seq),
    };

    let out_ports: Vec<crate::ids::PortId> = pe
        .out_ports
        .iter()
        .filter(|p| p.flows.contains(&flow))
        .map(|p| p.id.clone())
        .collect();
    if !out_ports.is_empty() {
        for port in out_ports {
            pe.staging.get_mut(&port).unwrap().push_back(frame.clone());
            world.counters.emitted += 1;
        }
        return;
    }
    let in_port = pe
        .in_ports
        .iter()
        .find(|p| p.flows.contains(&flow))
        .map(|p| p.id.clone());
    match in_port {
        Some(port) => {
            world.counters.emitted += 1;
            let mailbox_full = pe.adapter == crate::model::descriptor::InteractionStyle::Mailbox
                && pe.input_queues[&port].len() >= mailbox_capacity;
            if mailbox_full {
                let host = pe.host.clone();
                world.counters.dropped += 1;
                world.log(
                    LogKind::Backpressure,
                    &host,
                    vec![
                        ("pe", pe_id.to_string()),
                        ("port", port.to_string()),
                        ("flow", flow.to_string()),
                    ],
                );
            } else {
                pe.input_queues.get_mut(&port).unwrap().push_back(frame);
                world.counters.delivered += 1;
            }
        }
        None => {
            world.counters.emitted += 1;
            world.counters.dropped += 1;
            world.log_global(
                LogKind::FrameDropped,
                vec![
                    ("reason", "inject_unknown_flow".to_owned()),
                    ("pe", pe_id.to_string()),
                    ("flow", flow.to_string()),
                ],
            );
        }
    }
}

fn set_param(world: &mut World, key: &str, value: f64) {
    let params = &mut world.params;
    match key {
        "alpha" => params.alpha = value as u64,
        "beta" => params.beta_millis = (value * 1000.0).round() as u64,
        "gamma" => params.gamma_millis = (value * 1000.0).round() as u64,
        "hello_miss_k" => params.hello_miss_limit = (value as u32).max(1),
        "mailbox_capacity" => params.mailbox_capacity = (value as usize).max(1),
        "default_frame_bytes" => params.default_frame_bytes = value as u64,
        "control_bytes" => params.control_bytes = value as u64,
        _ => {}
    }
}

/// Per-run exit summary, also printed by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub ticks: u64,
    pub final_configs: BTreeMap<AppId, Option<String>>,
    pub reconfigurations: u64,
    pub emitted: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// host -> (tx, rx, cpu, battery string).
    pub energy: BTreeMap<HostId, (u64, u64, u64, String)>,
}

impl RunSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("ticks: {}\n", self.ticks));
        for (app, config) in &self.final_configs {
            out.push_str(&format!(
                "application {app}: final configuration {}\n",
                config.as_deref().unwrap_or("(none)")
            ));
        }
        out.push_str(&format!("reconfigurations: {}\n", self.reconfigurations));
        out.push_str(&format!(
            "frames: emitted {} delivered {} dropped {}\n",
            self.emitted, self.delivered, self.dropped
        ));
        out.push_str("energy per host (tx/rx/cpu, battery):\n");
        for (host, (tx, rx, cpu, battery)) in &self.energy {
            out.push_str(&format!("  {host}: {tx}/{rx}/{cpu}, {battery}\n"));
        }
        out
    }
}

/// Run a scenario to `max_ticks`, streaming the log into `out` with a
/// flush per tick.
pub fn run<W: Write>(
    spec: &ScenarioSpec,
    max_ticks: u64,
    seed_override: Option<u64>,
    out: W,
) -> Result<(Sim, Vec<EventLogRecord>, RunSummary)> {
    let mut sim = Sim::from_spec(spec, seed_override)?;
    let mut writer = LogWriter::new(out);
    for tick in 0..max_ticks {
        let records = sim.advance_tick_inner(tick + 1 == max_ticks);
        for record in records {
            writer.append(record)?;
        }
        writer.flush()?;
    }
    let records = writer.records;

    let reconfigurations = records
        .iter()
        .filter(|r| {
            r.kind == LogKind::ReconfigurationComplete && r.detail("trigger") != Some("initial")
        })
        .count() as u64;
    let summary = RunSummary {
        ticks: max_ticks,
        final_configs: sim
            .world
            .platform
            .apps
            .values()
            .map(|a| {
                (
                    a.app.clone(),
                    a.deployment.config.as_ref().map(|c| c.to_string()),
                )
            })
            .collect(),
        reconfigurations,
        emitted: sim.world.counters.emitted,
        delivered: sim.world.counters.delivered,
        dropped: sim.world.counters.dropped,
        energy: sim
            .world
            .hosts
            .values()
            .map(|h| {
                let battery = if h.class == HostClass::Fixed {
                    "inf".to_owned()
                } else {
                    h.battery().to_string()
                };
                (
                    h.id.clone(),
                    (
                        h.ledger.consumed_tx,
                        h.ledger.consumed_rx,
                        h.ledger.consumed_cpu,
                        battery,
                    ),
                )
            })
            .collect(),
    };
    Ok((sim, records, summary))
}

/// Replay a scenario for `ticks` ticks and return the final simulator
/// state; the `oracle` command uses this to snapshot mid-run contexts.
pub fn replay_to(spec: &ScenarioSpec, ticks: u64, seed_override: Option<u64>) -> Result<Sim> {
    let mut sim = Sim::from_spec(spec, seed_override)?;
    for _ in 0..ticks {
        sim.advance_tick();
    }
    Ok(sim)
}
