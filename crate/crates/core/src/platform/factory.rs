//! Container and conduit factories plus the per-host message handlers.
//!
//! Factories run on the host that controls a component: the component's
//! own host when it is fixed or a sensor, the correspondent when it is
//! light. A create travels supervisor -> factory (directive) -> subject
//! host (deploy); the deploy installs every fragment of the plan
//! atomically and acknowledges back to the supervisor with a state
//! report.

use crate::error::Error;
use crate::ids::{ConduitId, HostId, PeId};
use crate::model::control::{ControlCommand, StateReport, SubjectId};
use crate::model::pe::{ComponentState, ControlPlacement};
use crate::platform::message::{
    AckToken, ConduitSpec, ContainerSpec, MigratePhase, PlatformMessage, Stage, UcSnapshot,
};
use crate::routing;
use crate::transport::{Envelope, MessageBody, Priority};
use crate::world::World;

/// The host a subject's factory and control logic live on.
pub fn controller_host(world: &World, subject: &SubjectId) -> Option<HostId> {
    match subject {
        SubjectId::Pe(id) => world
            .pes
            .get(id)
            .map(|pe| pe.control.command_entry(&pe.host)),
        SubjectId::Conduit(id) => world
            .conduits
            .get(id)
            .map(|c| c.control.command_entry(&c.source_host)),
    }
}

/// Send a platform message, logging a drop record when no route exists.
pub fn send_or_drop(
    world: &mut World,
    src: &HostId,
    dst: &HostId,
    priority: Priority,
    message: PlatformMessage,
) {
    let kind = message.log_kind();
    let summary = message.summary();
    if let Err(Error::NoRoute { .. }) = world.send_platform(src, dst, priority, message) {
        world.log(
            kind,
            src,
            vec![
                ("event", "dropped".to_owned()),
                ("reason", "no_route".to_owned()),
                ("dst", dst.to_string()),
                ("summary", summary),
            ],
        );
    }
}

fn ack_report(
    world: &mut World,
    from: &HostId,
    to: &HostId,
    subject: &SubjectId,
    ack: AckToken,
    error: Option<String>,
) {
    let report = world.state_report(subject).unwrap_or_else(|_| StateReport {
        source: subject.clone(),
        state: ComponentState::Failed,
        queue_depths: Default::default(),
        processed_recent: 0,
        drops_recent: 0,
        blocked: false,
    });
    send_or_drop(
        world,
        from,
        to,
        Priority::Normal,
        PlatformMessage::StateReport {
            report,
            ack: Some(ack),
            error,
        },
    );
}

/// Remove a component and every trace of it: frames, memory on alive
/// hosts, in-use registrations. Used by destroys and by the supervisor
/// when it abandons a component on a dead host.
pub fn purge_pe(world: &mut World, pe_id: &PeId, reason: &str) {
    let Some(pe) = world.pes.get(pe_id) else {
        return;
    };
    // Conduits are destroyed before containers by script order; any
    // leftover attachment is forcibly disconnected.
    let attached: Vec<ConduitId> = pe
        .attached_in
        .values()
        .chain(pe.attached_out.values())
        .cloned()
        .collect();
    for conduit in attached {
        purge_conduit(world, &conduit, reason);
    }
    let Some(mut pe) = world.pes.remove(pe_id) else {
        return;
    };
    let staged = pe.drain_staging();
    world.drop_frames(staged, reason);
    let footprint = world
        .repository
        .get(&pe.cm)
        .map(|d| d.memory_footprint)
        .unwrap_or(0);
    for (fragment, host) in &pe.placement {
        let amount = fragment.footprint(footprint, &world.params.footprints.clone());
        if let Some(h) = world.hosts.get_mut(host) {
            h.memory_used = h.memory_used.saturating_sub(amount);
        }
    }
    for (a, b) in &pe.in_use_pairs {
        routing::remove_in_use(world, a, b);
        routing::remove_in_use(world, b, a);
    }
}

pub fn purge_conduit(world: &mut World, conduit_id: &ConduitId, reason: &str) {
    let placement = match world.conduits.get(conduit_id) {
        Some(c) => c.placement.clone(),
        None => return,
    };
    let pairs = world
        .conduits
        .get(conduit_id)
        .map(|c| c.in_use_pairs.clone())
        .unwrap_or_default();
    if let Ok(lost) = world.disconnect(conduit_id) {
        world.drop_frames(lost, reason);
    }
    for (fragment, host) in &placement {
        let amount = fragment.footprint(0, &world.params.footprints.clone());
        if let Some(h) = world.hosts.get_mut(host) {
            h.memory_used = h.memory_used.saturating_sub(amount);
        }
    }
    for (a, b) in &pairs {
        routing::remove_in_use(world, a, b);
        routing::remove_in_use(world, b, a);
    }
}

/// Handle one platform message delivered to `host`.
pub fn handle_message(world: &mut World, host: &HostId, envelope: Envelope) {
    let MessageBody::Platform(message) = envelope.body else {
        return;
    };
    match *message {
        PlatformMessage::CreateContainer {
            spec,
            stage,
            reply_to,
            ack,
        } => handle_create_container(world, host, spec, stage, reply_to, ack),
        PlatformMessage::DestroyContainer {
            app: _,
            pe,
            stage,
            reply_to,
            ack,
        } => handle_destroy_container(world, host, pe, stage, reply_to, ack),
        PlatformMessage::CreateConduit {
            spec,
            stage,
            reply_to,
            ack,
        } => handle_create_conduit(world, host, spec, stage, reply_to, ack),
        PlatformMessage::DestroyConduit {
            app: _,
            conduit,
            stage,
            reply_to,
            ack,
        } => handle_destroy_conduit(world, host, conduit, stage, reply_to, ack),
        PlatformMessage::Command {
            target,
            command,
            reply_to,
            ack,
        } => handle_command(world, host, target, command, reply_to, ack),
        PlatformMessage::StateReport { report, ack, error } => {
            crate::platform::supervisor::handle_state_report(world, host, report, ack, error)
        }
        PlatformMessage::RouteAlert { owner, lost } => {
            crate::platform::supervisor::handle_route_alert(world, host, owner, lost)
        }
        PlatformMessage::RouteInfo {
            owner,
            destination,
            old_hops,
            new_hops,
        } => crate::platform::supervisor::handle_route_info(
            world,
            host,
            owner,
            destination,
            old_hops,
            new_hops,
        ),
        PlatformMessage::MigrateUc {
            light,
            old_correspondent,
            phase,
            snapshots,
        } => handle_migrate(world, host, light, old_correspondent, phase, snapshots),
    }
}

fn handle_create_container(
    world: &mut World,
    host: &HostId,
    spec: ContainerSpec,
    stage: Stage,
    reply_to: HostId,
    ack: AckToken,
) {
    let subject = SubjectId::Pe(spec.pe.clone());
    match stage {
        Stage::Directive => {
            // Factory-side validation before deploying to the subject.
            if let Err(err) = world.visible_descriptor(&spec.cm, &spec.host) {
                ack_report(world, host, &reply_to, &subject, ack, Some(err.to_string()));
                return;
            }
            if !world.host_alive(&spec.host) {
                ack_report(
                    world,
                    host,
                    &reply_to,
                    &subject,
                    ack,
                    Some(format!("host {} is dead", spec.host)),
                );
                return;
            }
            if let Some(cause) = capacity_obstacle(world, &spec) {
                ack_report(world, host, &reply_to, &subject, ack, Some(cause));
                return;
            }
            let target = spec.host.clone();
            let message = PlatformMessage::CreateContainer {
                spec,
                stage: Stage::Deploy,
                reply_to,
                ack,
            };
            send_or_drop(world, host, &target, Priority::Normal, message);
        }
        Stage::Deploy => {
            // A live instance with the same identity is replaced.
            if world.pes.contains_key(&spec.pe) {
                purge_pe(world, &spec.pe, "replaced");
            }
            if let Some(cause) = capacity_obstacle(world, &spec) {
                ack_report(world, host, &reply_to, &subject, ack, Some(cause));
                return;
            }
            let control = spec.plan.control_placement(&spec.host);
            if let Err(err) = world.instantiate_pe(spec.pe.clone(), &spec.cm, &spec.host, control) {
                ack_report(world, host, &reply_to, &subject, ack, Some(err.to_string()));
                return;
            }
            let footprint = world.repository[&spec.cm].memory_footprint;
            for (fragment, fragment_host) in &spec.plan.placements {
                let amount = fragment.footprint(footprint, &world.params.footprints.clone());
                if let Some(h) = world.hosts.get_mut(fragment_host) {
                    h.memory_used += amount;
                }
            }
            let mut pairs = vec![(spec.host.clone(), reply_to.clone())];
            if let ControlPlacement::Split { stub_on, logic_on } =
                &world.pes[&spec.pe].control.clone()
            {
                pairs.push((stub_on.clone(), logic_on.clone()));
            }
            for (a, b) in &pairs {
                routing::add_in_use(world, a, b);
                routing::add_in_use(world, b, a);
            }
            let pe = world.pes.get_mut(&spec.pe).unwrap();
            pe.placement = spec.plan.placements.clone();
            pe.in_use_pairs = pairs;
            ack_report(world, host, &reply_to, &subject, ack, None);
        }
    }
}

fn capacity_obstacle(world: &World, spec: &ContainerSpec) -> Option<String> {
    let footprint = world
        .repository
        .get(&spec.cm)
        .map(|d| d.memory_footprint)
        .unwrap_or(0);
    for (fragment_host, load) in spec.plan.load_per_host(footprint, &world.params.footprints) {
        let Some(h) = world.hosts.get(&fragment_host) else {
            return Some(format!("unknown host {fragment_host}"));
        };
        if h.free_memory() < load {
            return Some(
                Error::CapacityExceeded {
                    host: fragment_host,
                    needed: load,
                    free: h.free_memory(),
                }
                .to_string(),
            );
        }
    }
    None
}

fn handle_destroy_container(
    world: &mut World,
    host: &HostId,
    pe: PeId,
    stage: Stage,
    reply_to: HostId,
    ack: AckToken,
) {
    let subject = SubjectId::Pe(pe.clone());
    match stage {
        Stage::Directive => {
            let Some(instance) = world.pes.get(&pe) else {
                // Already gone; acknowledge so the script can move on.
                ack_report(world, host, &reply_to, &subject, ack, None);
                return;
            };
            let subject_host = instance.host.clone();
            if !world.host_alive(&subject_host) {
                purge_pe(world, &pe, "host_dead");
                ack_report(world, host, &reply_to, &subject, ack, None);
                return;
            }
            let message = PlatformMessage::DestroyContainer {
                app: Default::default(),
                pe,
                stage: Stage::Deploy,
                reply_to,
                ack,
            };
            send_or_drop(world, host, &subject_host, Priority::Normal, message);
        }
        Stage::Deploy => {
            purge_pe(world, &pe, "container_destroyed");
            ack_report(world, host, &reply_to, &subject, ack, None);
        }
    }
}

fn handle_create_conduit(
    world: &mut World,
    host: &HostId,
    spec: ConduitSpec,
    stage: Stage,
    reply_to: HostId,
    ack: AckToken,
) {
    let subject = SubjectId::Conduit(spec.conduit.clone());
    match stage {
        Stage::Directive => {
            for pe in [&spec.source.0, &spec.target.0] {
                if !world.pes.contains_key(pe) {
                    ack_report(
                        world,
                        host,
                        &reply_to,
                        &subject,
                        ack,
                        Some(Error::UnknownEndpoint(pe.to_string()).to_string()),
                    );
                    return;
                }
            }
            if spec.source_host != spec.target_host
                && routing::route_lookup(world, &spec.source_host, &spec.target_host).is_none()
            {
                let err = Error::NoRoute {
                    from: spec.source_host.clone(),
                    to: spec.target_host.clone(),
                };
                ack_report(world, host, &reply_to, &subject, ack, Some(err.to_string()));
                return;
            }
            let target = spec.source_host.clone();
            let message = PlatformMessage::CreateConduit {
                spec,
                stage: Stage::Deploy,
                reply_to,
                ack,
            };
            send_or_drop(world, host, &target, Priority::Normal, message);
        }
        Stage::Deploy => {
            if world.conduits.contains_key(&spec.conduit) {
                purge_conduit(world, &spec.conduit, "replaced");
            }
            for (fragment_host, load) in spec.plan.load_per_host(0, &world.params.footprints) {
                let Some(h) = world.hosts.get(&fragment_host) else {
                    continue;
                };
                if h.free_memory() < load {
                    let err = Error::CapacityExceeded {
                        host: fragment_host,
                        needed: load,
                        free: h.free_memory(),
                    };
                    ack_report(world, host, &reply_to, &subject, ack, Some(err.to_string()));
                    return;
                }
            }
            let control = spec.plan.control_placement(&spec.source_host);
            let connected = world.connect(
                spec.conduit.clone(),
                &spec.source.0,
                &spec.source.1,
                &spec.target.0,
                &spec.target.1,
                spec.flows.clone(),
                spec.policy,
                control.clone(),
            );
            if let Err(err) = connected {
                ack_report(world, host, &reply_to, &subject, ack, Some(err.to_string()));
                return;
            }
            for (fragment, fragment_host) in &spec.plan.placements {
                let amount = fragment.footprint(0, &world.params.footprints.clone());
                if let Some(h) = world.hosts.get_mut(fragment_host) {
                    h.memory_used += amount;
                }
            }
            let mut pairs = Vec::new();
            if spec.source_host != spec.target_host {
                pairs.push((spec.source_host.clone(), spec.target_host.clone()));
            }
            if let ControlPlacement::Split { stub_on, logic_on } = &control {
                pairs.push((stub_on.clone(), logic_on.clone()));
            }
            let controller = control.command_entry(&spec.source_host);
            if controller != reply_to {
                pairs.push((controller, reply_to.clone()));
            }
            for (a, b) in &pairs {
                routing::add_in_use(world, a, b);
                routing::add_in_use(world, b, a);
            }
            let conduit = world.conduits.get_mut(&spec.conduit).unwrap();
            conduit.placement = spec.plan.placements.clone();
            conduit.in_use_pairs = pairs;
            ack_report(world, host, &reply_to, &subject, ack, None);
        }
    }
}

fn handle_destroy_conduit(
    world: &mut World,
    host: &HostId,
    conduit: ConduitId,
    stage: Stage,
    reply_to: HostId,
    ack: AckToken,
) {
    let subject = SubjectId::Conduit(conduit.clone());
    match stage {
        Stage::Directive => {
            let Some(instance) = world.conduits.get(&conduit) else {
                ack_report(world, host, &reply_to, &subject, ack, None);
                return;
            };
            let endpoint = instance.source_host.clone();
            if !world.host_alive(&endpoint) {
                purge_conduit(world, &conduit, "host_dead");
                ack_report(world, host, &reply_to, &subject, ack, None);
                return;
            }
            let message = PlatformMessage::DestroyConduit {
                app: Default::default(),
                conduit,
                stage: Stage::Deploy,
                reply_to,
                ack,
            };
            send_or_drop(world, host, &endpoint, Priority::Normal, message);
        }
        Stage::Deploy => {
            purge_conduit(world, &conduit, "conduit_destroyed");
            ack_report(world, host, &reply_to, &subject, ack, None);
        }
    }
}

fn handle_command(
    world: &mut World,
    host: &HostId,
    target: SubjectId,
    command: ControlCommand,
    reply_to: HostId,
    ack: Option<AckToken>,
) {
    let component_host = match &target {
        SubjectId::Pe(id) => world.pes.get(id).map(|pe| pe.host.clone()),
        SubjectId::Conduit(id) => world.conduits.get(id).map(|c| c.source_host.clone()),
    };
    let Some(component_host) = component_host else {
        if let Some(ack) = ack {
            ack_report(
                world,
                host,
                &reply_to,
                &target,
                ack,
                Some(Error::UnknownTarget(target.to_string()).to_string()),
            );
        }
        return;
    };
    if &component_host != host {
        // Deported control logic relays the command to the local stub.
        let message = PlatformMessage::Command {
            target,
            command,
            reply_to,
            ack,
        };
        send_or_drop(world, host, &component_host, Priority::Normal, message);
        return;
    }
    match world.apply_command(&target, &command) {
        Ok(report) => {
            send_or_drop(
                world,
                host,
                &reply_to,
                Priority::Normal,
                PlatformMessage::StateReport {
                    report,
                    ack,
                    error: None,
                },
            );
        }
        Err(err) => {
            if let Some(ack) = ack {
                ack_report(world, host, &reply_to, &target, ack, Some(err.to_string()));
            } else {
                send_or_drop(
                    world,
                    host,
                    &reply_to,
                    Priority::Normal,
                    PlatformMessage::StateReport {
                        report: StateReport {
                            source: target,
                            state: ComponentState::Failed,
                            queue_depths: Default::default(),
                            processed_recent: 0,
                            drops_recent: 0,
                            blocked: false,
                        },
                        ack: None,
                        error: Some(err.to_string()),
                    },
                );
            }
        }
    }
}

fn handle_migrate(
    world: &mut World,
    host: &HostId,
    light: HostId,
    old_correspondent: Option<HostId>,
    phase: MigratePhase,
    snapshots: Vec<UcSnapshot>,
) {
    match phase {
        MigratePhase::Request => {
            let Some(first) = snapshots.first() else {
                return;
            };
            let token = AckToken::migration(&light);
            // Only fragments not already adopted count: a retried request
            // may overlap an earlier one whose acknowledgement was lost.
            let fresh: Vec<UcSnapshot> = snapshots
                .iter()
                .filter(|s| !fragment_already_here(world, s, host))
                .cloned()
                .collect();
            let needed: u64 = fresh
                .iter()
                .map(|s| s.fragment.footprint(0, &world.params.footprints))
                .sum();
            let free = world.hosts.get(host).map(|h| h.free_memory()).unwrap_or(0);
            if free < needed {
                let err = Error::CapacityExceeded {
                    host: host.clone(),
                    needed,
                    free,
                };
                ack_report(
                    world,
                    host,
                    &light,
                    &first.subject.clone(),
                    token,
                    Some(err.to_string()),
                );
                return;
            }
            for snapshot in &fresh {
                adopt_fragment(world, host, &light, snapshot);
            }
            world
                .platform
                .correspondents
                .insert(light.clone(), host.clone());
            // Tell the old correspondent to release what actually moved.
            if let Some(old) = &old_correspondent {
                if !fresh.is_empty()
                    && old != host
                    && world.host_alive(old)
                    && routing::route_lookup(world, host, old).is_some()
                {
                    let release = PlatformMessage::MigrateUc {
                        light: light.clone(),
                        old_correspondent: None,
                        phase: MigratePhase::Release,
                        snapshots: fresh,
                    };
                    send_or_drop(world, host, &old.clone(), Priority::Normal, release);
                }
            }
            ack_report(world, host, &light, &first.subject.clone(), token, None);
        }
        MigratePhase::Release => {
            for snapshot in &snapshots {
                let amount = snapshot.fragment.footprint(0, &world.params.footprints);
                if let Some(h) = world.hosts.get_mut(host) {
                    h.memory_used = h.memory_used.saturating_sub(amount);
                }
            }
        }
    }
}

fn fragment_already_here(world: &World, snapshot: &UcSnapshot, host: &HostId) -> bool {
    let control = match &snapshot.subject {
        SubjectId::Pe(id) => world.pes.get(id).map(|pe| &pe.control),
        SubjectId::Conduit(id) => world.conduits.get(id).map(|c| &c.control),
    };
    matches!(control, Some(ControlPlacement::Split { logic_on, .. }) if logic_on == host)
}

/// Move one deported fragment onto this host, rewiring placement records
/// and in-use registrations. Re-adoption of a fragment already here is a
/// no-op: a retried request after a lost acknowledgement must not charge
/// memory twice.
fn adopt_fragment(world: &mut World, new_logic: &HostId, light: &HostId, snapshot: &UcSnapshot) {
    let amount = snapshot.fragment.footprint(0, &world.params.footprints);
    let (placement, pairs, old_logic) = match &snapshot.subject {
        SubjectId::Pe(id) => match world.pes.get_mut(id) {
            Some(pe) => {
                let old = match &pe.control {
                    ControlPlacement::Split { logic_on, .. } => Some(logic_on.clone()),
                    ControlPlacement::Local => None,
                };
                if old.as_ref() == Some(new_logic) {
                    pe.unsupervised = false;
                    return;
                }
                pe.control = ControlPlacement::Split {
                    stub_on: light.clone(),
                    logic_on: new_logic.clone(),
                };
                pe.unsupervised = false;
                (&mut pe.placement, &mut pe.in_use_pairs, old)
            }
            None => return,
        },
        SubjectId::Conduit(id) => match world.conduits.get_mut(id) {
            Some(conduit) => {
                let old = match &conduit.control {
                    ControlPlacement::Split { logic_on, .. } => Some(logic_on.clone()),
                    ControlPlacement::Local => None,
                };
                if old.as_ref() == Some(new_logic) {
                    return;
                }
                conduit.control = ControlPlacement::Split {
                    stub_on: light.clone(),
                    logic_on: new_logic.clone(),
                };
                (&mut conduit.placement, &mut conduit.in_use_pairs, old)
            }
            None => return,
        },
    };
    for (fragment, fragment_host) in placement.iter_mut() {
        if *fragment == snapshot.fragment {
            *fragment_host = new_logic.clone();
        }
    }
    let mut removed_pairs = Vec::new();
    if let Some(old) = &old_logic {
        pairs.retain(|pair| {
            let stale =
                (pair.0 == *light && pair.1 == *old) || (pair.0 == *old && pair.1 == *light);
            if stale {
                removed_pairs.push(pair.clone());
            }
            !stale
        });
    }
    pairs.push((light.clone(), new_logic.clone()));
    for (a, b) in removed_pairs {
        routing::remove_in_use(world, &a, &b);
        routing::remove_in_use(world, &b, &a);
    }
    routing::add_in_use(world, light, new_logic);
    routing::add_in_use(world, new_logic, light);
    if let Some(h) = world.hosts.get_mut(new_logic) {
        h.memory_used += amount;
    }
}
