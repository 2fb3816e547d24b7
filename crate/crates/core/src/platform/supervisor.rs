//! The supervision service: it watches route events, evaluates the
//! configuration family against fresh context, and drives destroy/create
//! scripts through the factories. One script runs at a time per
//! application; everything else queues behind it.

use std::collections::BTreeSet;

use crate::ids::{AppId, HostId, PeId, PortId};
use crate::log::LogKind;
use crate::model::control::{ControlCommand, StateReport, SubjectId};
use crate::platform::factory::{controller_host, purge_conduit, purge_pe, send_or_drop};
use crate::platform::message::{AckToken, ConduitSpec, ContainerSpec, PlatformMessage, Stage};
use crate::platform::plan::{plan_conduit_deployment, plan_pe_deployment, FragmentKind};
use crate::platform::state::{
    AppSupervisor, Decision, ExecPhase, PendingAction, ScriptExecution, Trigger,
};
use crate::qos::context::ContextSnapshot;
use crate::qos::diff::diff_config;
use crate::qos::select::{score_with_bindings, select_excluding};
use crate::routing;
use crate::transport::Priority;
use crate::world::{HostClass, World};

/// Mark an app for re-evaluation, keeping the strongest pending trigger.
fn queue_reeval(app: &mut AppSupervisor, trigger: Trigger) {
    let rank = |t: &Trigger| match t {
        Trigger::Initial => 3,
        Trigger::RouteAlert { .. } => 2,
        Trigger::RouteInfo { .. } => 1,
        Trigger::Retry => 0,
    };
    match &app.reeval {
        Some(existing) if rank(existing) >= rank(&trigger) => {}
        _ => app.reeval = Some(trigger),
    }
}

/// Route-loss alert delivered at `host`. A host that runs no supervisor
/// relays to every application supervisor; a supervisor marks affected
/// applications for immediate re-evaluation.
pub fn handle_route_alert(world: &mut World, host: &HostId, owner: HostId, lost: HostId) {
    let local_apps: Vec<AppId> = world
        .platform
        .apps
        .values()
        .filter(|a| &a.host == host)
        .map(|a| a.app.clone())
        .collect();
    if local_apps.is_empty() {
        let supervisors: BTreeSet<HostId> = world
            .platform
            .apps
            .values()
            .map(|a| a.host.clone())
            .collect();
        for supervisor in supervisors {
            let message = PlatformMessage::RouteAlert {
                owner: owner.clone(),
                lost: lost.clone(),
            };
            send_or_drop(world, host, &supervisor, Priority::High, message);
        }
        return;
    }
    let tick = world.clock.tick;
    for app_id in local_apps {
        let app = world.platform.apps.get_mut(&app_id).unwrap();
        if alert_concerns(app, &owner, &lost) {
            queue_reeval(app, Trigger::RouteAlert { alert_tick: tick });
        }
    }
}

pub fn handle_route_info(
    world: &mut World,
    host: &HostId,
    owner: HostId,
    destination: HostId,
    old_hops: u32,
    new_hops: u32,
) {
    let local_apps: Vec<AppId> = world
        .platform
        .apps
        .values()
        .filter(|a| &a.host == host)
        .map(|a| a.app.clone())
        .collect();
    if local_apps.is_empty() {
        let supervisors: BTreeSet<HostId> = world
            .platform
            .apps
            .values()
            .map(|a| a.host.clone())
            .collect();
        for supervisor in supervisors {
            let message = PlatformMessage::RouteInfo {
                owner: owner.clone(),
                destination: destination.clone(),
                old_hops,
                new_hops,
            };
            send_or_drop(world, host, &supervisor, Priority::Normal, message);
        }
        return;
    }
    let tick = world.clock.tick;
    for app_id in local_apps {
        let app = world.platform.apps.get_mut(&app_id).unwrap();
        queue_reeval(app, Trigger::RouteInfo { info_tick: tick });
    }
}

fn alert_concerns(app: &AppSupervisor, owner: &HostId, lost: &HostId) -> bool {
    if app.deployment.config.is_none() {
        return app.degraded;
    }
    let mut hosts = app.deployment.hosts();
    hosts.insert(app.host.clone());
    hosts.contains(owner) || hosts.contains(lost)
}

/// STATE_REPORT arriving at `host`: either a script/migration ack or an
/// unsolicited report.
pub fn handle_state_report(
    world: &mut World,
    host: &HostId,
    report: StateReport,
    ack: Option<AckToken>,
    error: Option<String>,
) {
    let Some(AckToken(token)) = ack else { return };
    if let Some(light) = token.strip_prefix("migrate:") {
        if host.as_str() == light {
            if let Some(stub) = world.platform.stubs.get_mut(host) {
                stub.pending_since = None;
            }
        }
        return;
    }
    let _ = report;
    let app_ids: Vec<AppId> = world
        .platform
        .apps
        .values()
        .filter(|a| &a.host == host)
        .map(|a| a.app.clone())
        .collect();
    for app_id in app_ids {
        let app = world.platform.apps.get_mut(&app_id).unwrap();
        let Some(exec) = app.exec.as_mut() else {
            continue;
        };
        let Some(action) = exec.pending.remove(&token) else {
            continue;
        };
        if let Some(cause) = &error {
            exec.failure = Some(cause.clone());
        } else {
            match action {
                PendingAction::DestroyConduit(id) => {
                    app.deployment.edges.retain(|_, v| v != &id);
                }
                PendingAction::DestroyContainer(id) => {
                    app.deployment.nodes.retain(|_, v| v != &id);
                }
                PendingAction::CreateContainer(key, pe) => {
                    app.deployment.nodes.insert(key, pe);
                }
                PendingAction::CreateConduit(key, conduit) => {
                    app.deployment.edges.insert(key, conduit);
                }
                PendingAction::Start(_) => {}
            }
        }
        break;
    }
}

/// Advance every application's supervisor: send script batches whose
/// predecessors completed, finish or fail scripts, run queued
/// re-evaluations. Returns true when anything moved. An application
/// whose supervisor host died is headless: its components keep running
/// but nothing decides for them anymore.
pub fn supervisor_phase(world: &mut World) -> bool {
    let app_ids: Vec<AppId> = world.platform.apps.keys().cloned().collect();
    let mut progressed = false;
    for app_id in app_ids {
        let supervisor_alive = world
            .platform
            .apps
            .get(&app_id)
            .map(|a| world.host_alive(&a.host))
            .unwrap_or(false);
        if !supervisor_alive {
            continue;
        }
        loop {
            let moved = advance_exec(world, &app_id) || run_pending_selection(world, &app_id);
            progressed |= moved;
            if !moved {
                break;
            }
        }
    }
    progressed
}

fn advance_exec(world: &mut World, app_id: &AppId) -> bool {
    let Some(app) = world.platform.apps.get(app_id) else {
        return false;
    };
    let Some(exec) = &app.exec else { return false };

    if !exec.sent {
        send_current_batch(world, app_id);
        return true;
    }
    if !exec.pending.is_empty() {
        return false;
    }
    // Batch complete: fail, advance, or finish.
    let app = world.platform.apps.get_mut(app_id).unwrap();
    let exec = app.exec.as_mut().unwrap();
    if let Some(cause) = exec.failure.clone() {
        let config = exec.script.config.clone();
        let trigger = exec.trigger;
        let decision_tick = exec.decision_tick;
        app.excluded.insert(config.clone());
        app.exec = None;
        queue_reeval(app, Trigger::Retry);
        let host = app.host.clone();
        let app_name = app.app.clone();
        world.log(
            LogKind::ReconfigurationFailed,
            &host,
            vec![
                ("app", app_name.to_string()),
                ("config", config.to_string()),
                ("cause", cause),
                ("trigger", trigger.as_str().to_owned()),
                ("decision_tick", decision_tick.to_string()),
            ],
        );
        return true;
    }
    match exec.phase.next() {
        Some(next) => {
            exec.phase = next;
            exec.sent = false;
            true
        }
        None => {
            let script = exec.script.clone();
            let trigger = exec.trigger;
            let decision_tick = exec.decision_tick;
            app.deployment.config = Some(script.config.clone());
            app.deployment.bindings = script.bindings.clone();
            app.exec = None;
            app.degraded = false;
            app.excluded.clear();
            let host = app.host.clone();
            let app_name = app.app.clone();
            let bindings = script
                .bindings
                .iter()
                .map(|(node, host)| format!("{node}={host}"))
                .collect::<Vec<_>>()
                .join(";");
            let mut details = vec![
                ("app", app_name.to_string()),
                ("config", script.config.to_string()),
                ("trigger", trigger.as_str().to_owned()),
                ("decision_tick", decision_tick.to_string()),
                ("bindings", bindings),
            ];
            if let Some(origin) = trigger.origin_tick() {
                details.push(("trigger_tick", origin.to_string()));
            }
            world.log(LogKind::ReconfigurationComplete, &host, details);
            true
        }
    }
}

/// Send every message of the current phase, resolving abandoned items
/// (dead or unreachable targets) inline.
fn send_current_batch(world: &mut World, app_id: &AppId) {
    let (host, script, phase) = {
        let app = world.platform.apps.get(app_id).unwrap();
        let exec = app.exec.as_ref().unwrap();
        (app.host.clone(), exec.script.clone(), exec.phase)
    };
    let mut pending: Vec<(String, PendingAction)> = Vec::new();
    let mut failure: Option<String> = None;

    match phase {
        ExecPhase::DestroyConduits => {
            for conduit_id in &script.destroy_conduits {
                let subject = SubjectId::Conduit(conduit_id.clone());
                let token = AckToken::script(app_id, &format!("dx:{conduit_id}"));
                let reachable_controller = controller_host(world, &subject).filter(|c| {
                    world.host_alive(c) && routing::route_lookup(world, &host, c).is_some()
                });
                match reachable_controller {
                    Some(controller) => {
                        let message = PlatformMessage::DestroyConduit {
                            app: app_id.clone(),
                            conduit: conduit_id.clone(),
                            stage: Stage::Directive,
                            reply_to: host.clone(),
                            ack: token.clone(),
                        };
                        send_or_drop(world, &host, &controller, Priority::Normal, message);
                        pending.push((token.0, PendingAction::DestroyConduit(conduit_id.clone())));
                    }
                    None => abandon_conduit(world, app_id, conduit_id),
                }
            }
        }
        ExecPhase::DestroyContainers => {
            for pe_id in &script.destroy_containers {
                let subject = SubjectId::Pe(pe_id.clone());
                let token = AckToken::script(app_id, &format!("dp:{pe_id}"));
                let reachable_controller = controller_host(world, &subject).filter(|c| {
                    world.host_alive(c) && routing::route_lookup(world, &host, c).is_some()
                });
                match reachable_controller {
                    Some(controller) => {
                        let message = PlatformMessage::DestroyContainer {
                            app: app_id.clone(),
                            pe: pe_id.clone(),
                            stage: Stage::Directive,
                            reply_to: host.clone(),
                            ack: token.clone(),
                        };
                        send_or_drop(world, &host, &controller, Priority::Normal, message);
                        pending.push((token.0, PendingAction::DestroyContainer(pe_id.clone())));
                    }
                    None => abandon_container(world, app_id, pe_id),
                }
            }
        }
        ExecPhase::CreateContainers => {
            for planned in &script.create_containers {
                match prepare_container(world, app_id, &host, planned) {
                    Ok((controller, spec, token)) => {
                        let message = PlatformMessage::CreateContainer {
                            spec,
                            stage: Stage::Directive,
                            reply_to: host.clone(),
                            ack: AckToken(token.clone()),
                        };
                        send_or_drop(world, &host, &controller, Priority::Normal, message);
                        pending.push((
                            token,
                            PendingAction::CreateContainer(planned.key.clone(), planned.pe.clone()),
                        ));
                    }
                    Err(cause) => {
                        failure = Some(cause);
                        break;
                    }
                }
            }
        }
        ExecPhase::CreateConduits => {
            for planned in &script.create_conduits {
                match prepare_conduit(world, app_id, &host, planned) {
                    Ok((controller, spec, token)) => {
                        let message = PlatformMessage::CreateConduit {
                            spec,
                            stage: Stage::Directive,
                            reply_to: host.clone(),
                            ack: AckToken(token.clone()),
                        };
                        send_or_drop(world, &host, &controller, Priority::Normal, message);
                        pending.push((
                            token,
                            PendingAction::CreateConduit(
                                planned.key.clone(),
                                planned.conduit.clone(),
                            ),
                        ));
                    }
                    Err(cause) => {
                        failure = Some(cause);
                        break;
                    }
                }
            }
        }
        ExecPhase::Start => {
            let mut subjects: Vec<SubjectId> = script
                .create_containers
                .iter()
                .map(|p| SubjectId::Pe(p.pe.clone()))
                .collect();
            subjects.extend(
                script
                    .create_conduits
                    .iter()
                    .map(|p| SubjectId::Conduit(p.conduit.clone())),
            );
            for subject in subjects {
                let token = AckToken::script(app_id, &format!("st:{subject}"));
                let entry = controller_host(world, &subject).unwrap_or_else(|| host.clone());
                let message = PlatformMessage::Command {
                    target: subject.clone(),
                    command: ControlCommand::Start,
                    reply_to: host.clone(),
                    ack: Some(token.clone()),
                };
                send_or_drop(world, &host, &entry, Priority::Normal, message);
                pending.push((token.0, PendingAction::Start(subject)));
            }
        }
    }

    let app = world.platform.apps.get_mut(app_id).unwrap();
    let exec = app.exec.as_mut().unwrap();
    exec.sent = true;
    for (token, action) in pending {
        exec.pending.insert(token, action);
    }
    if let Some(cause) = failure {
        exec.failure = Some(cause);
    }
}

/// A conduit whose controller is gone is torn down outright: the
/// reachable endpoints detach (ports must free up for the replacement),
/// the stranded fragment is written off with the rest.
fn abandon_conduit(world: &mut World, app_id: &AppId, conduit_id: &crate::ids::ConduitId) {
    purge_conduit(world, conduit_id, "abandoned");
    let app = world.platform.apps.get_mut(app_id).unwrap();
    app.deployment.edges.retain(|_, v| v != conduit_id);
    let host = app.host.clone();
    world.log(
        LogKind::DestroyConduit,
        &host,
        vec![
            ("conduit", conduit_id.to_string()),
            ("abandoned", "true".to_owned()),
        ],
    );
}

fn abandon_container(world: &mut World, app_id: &AppId, pe_id: &PeId) {
    let dead_host = world
        .pes
        .get(pe_id)
        .map(|pe| !world.host_alive(&pe.host))
        .unwrap_or(true);
    if dead_host {
        purge_pe(world, pe_id, "abandoned");
    }
    let app = world.platform.apps.get_mut(app_id).unwrap();
    app.deployment.nodes.retain(|_, v| v != pe_id);
    let host = app.host.clone();
    world.log(
        LogKind::DestroyContainer,
        &host,
        vec![("pe", pe_id.to_string()), ("abandoned", "true".to_owned())],
    );
}

fn prepare_container(
    world: &mut World,
    app_id: &AppId,
    supervisor: &HostId,
    planned: &crate::qos::diff::PlannedContainer,
) -> Result<(HostId, ContainerSpec, String), String> {
    let host_id = planned.key.host.clone();
    let cm = planned.key.cm.clone();
    let descriptor = world
        .repository
        .get(&cm)
        .cloned()
        .ok_or_else(|| format!("unknown descriptor {cm}"))?;
    let class = world
        .hosts
        .get(&host_id)
        .map(|h| h.class)
        .ok_or_else(|| format!("unknown host {host_id}"))?;
    if class == HostClass::Light {
        ensure_correspondent(world, &host_id)?;
    }
    let plan = plan_pe_deployment(world, &planned.pe, &cm, &host_id).map_err(|e| e.to_string())?;
    let controller = match class {
        HostClass::Fixed | HostClass::Sensor => host_id.clone(),
        HostClass::Light => world
            .platform
            .correspondents
            .get(&host_id)
            .cloned()
            .unwrap(),
    };
    if routing::route_lookup(world, supervisor, &controller).is_none() {
        return Err(format!(
            "factory host {controller} unreachable from supervisor"
        ));
    }
    let token = AckToken::script(app_id, &format!("cc:{}", planned.pe));
    let spec = ContainerSpec {
        app: app_id.clone(),
        pe: planned.pe.clone(),
        cm,
        host: host_id,
        adapter: descriptor.interaction_style,
        plan,
    };
    Ok((controller, spec, token.0))
}

fn prepare_conduit(
    world: &mut World,
    app_id: &AppId,
    supervisor: &HostId,
    planned: &crate::qos::diff::PlannedConduit,
) -> Result<(HostId, ConduitSpec, String), String> {
    let key = &planned.key;
    let source_pe = crate::qos::diff::pe_instance_id(&key.source);
    let target_pe = crate::qos::diff::pe_instance_id(&key.target);
    let source_port = port_for_flows(world, &key.source.cm, &key.flows, false)?;
    let target_port = port_for_flows(world, &key.target.cm, &key.flows, true)?;
    let source_host = key.source.host.clone();
    let target_host = key.target.host.clone();
    if world.hosts.get(&source_host).map(|h| h.class) == Some(HostClass::Light) {
        ensure_correspondent(world, &source_host)?;
    }
    let plan = plan_conduit_deployment(world, &planned.conduit, &source_host, &target_host)
        .map_err(|e| e.to_string())?;
    let controller = plan
        .placements
        .iter()
        .find(|(f, _)| *f == FragmentKind::ConduitControl)
        .map(|(_, h)| h.clone())
        .unwrap_or_else(|| source_host.clone());
    if routing::route_lookup(world, supervisor, &controller).is_none() {
        return Err(format!(
            "factory host {controller} unreachable from supervisor"
        ));
    }
    if source_host != target_host
        && routing::route_lookup(world, &source_host, &target_host).is_none()
    {
        return Err(format!("no route from {source_host} to {target_host}"));
    }
    let token = AckToken::script(app_id, &format!("cd:{}", planned.conduit));
    let spec = ConduitSpec {
        app: app_id.clone(),
        conduit: planned.conduit.clone(),
        source: (source_pe, source_port),
        target: (target_pe, target_port),
        source_host,
        target_host,
        flows: key.flows.clone(),
        policy: key.policy,
        plan,
    };
    Ok((controller, spec, token.0))
}

/// The port of a descriptor that carries exactly these flows.
fn port_for_flows(
    world: &World,
    cm: &crate::ids::CmId,
    flows: &[crate::ids::FlowId],
    input: bool,
) -> Result<PortId, String> {
    let descriptor = world
        .repository
        .get(cm)
        .ok_or_else(|| format!("unknown descriptor {cm}"))?;
    let wanted: BTreeSet<_> = flows.iter().cloned().collect();
    let (specs, prefix) = if input {
        (&descriptor.input_flows, "in")
    } else {
        (&descriptor.output_flows, "out")
    };
    specs
        .iter()
        .position(|p| p.flows().into_iter().collect::<BTreeSet<_>>() == wanted)
        .map(|i| PortId::new(format!("{prefix}{i}")))
        .ok_or_else(|| format!("descriptor {cm} has no {prefix} port for flows {flows:?}"))
}

/// Make sure a light host has a live correspondent, assigning one when
/// missing or stale.
fn ensure_correspondent(world: &mut World, light: &HostId) -> Result<HostId, String> {
    let current = world.platform.correspondents.get(light).cloned();
    let usable = current
        .as_ref()
        .filter(|c| world.host_alive(c) && routing::route_lookup(world, light, c).is_some());
    if let Some(c) = usable {
        return Ok(c.clone());
    }
    let assigned =
        crate::platform::plan::assign_correspondent(world, light).map_err(|e| e.to_string())?;
    world
        .platform
        .correspondents
        .insert(light.clone(), assigned.clone());
    Ok(assigned)
}

/// Run a queued selection for one application, if any.
fn run_pending_selection(world: &mut World, app_id: &AppId) -> bool {
    let (family, was_degraded, trigger) = {
        let Some(app) = world.platform.apps.get(app_id) else {
            return false;
        };
        if app.exec.is_some() {
            return false;
        }
        let Some(trigger) = app.reeval else {
            return false;
        };
        (app.family.clone(), app.degraded, trigger)
    };
    // Exclusions shield exactly one fallback selection from the config
    // that just failed; afterwards the whole family is back in play.
    let taken = std::mem::take(&mut world.platform.apps.get_mut(app_id).unwrap().excluded);
    let excluded = if matches!(trigger, Trigger::Retry) {
        taken
    } else {
        BTreeSet::new()
    };

    let ctx = ContextSnapshot::capture(world, app_id);
    let selection = select_excluding(&family, &ctx, &excluded);
    world.platform.decisions.push(Decision {
        tick: world.clock.tick,
        app: app_id.clone(),
        trigger: trigger.as_str(),
        chosen: selection.as_ref().map(|s| s.config.clone()),
        excluded: excluded.clone(),
        context: ctx.clone(),
    });

    let app = world.platform.apps.get_mut(app_id).unwrap();
    app.reeval = None;

    let Some(selection) = selection else {
        app.degraded = true;
        let host = app.host.clone();
        let app_name = app.app.clone();
        if !was_degraded {
            world.log(
                LogKind::ReconfigurationFailed,
                &host,
                vec![
                    ("app", app_name.to_string()),
                    ("cause", "no_valid_configuration".to_owned()),
                    ("trigger", trigger.as_str().to_owned()),
                ],
            );
        }
        return true;
    };

    // Hysteresis: an info only reconfigures on a strict improvement over
    // what is actually deployed.
    if !trigger.forces_reconfiguration() {
        if let Some(current_id) = app.deployment.config.clone() {
            if selection.config == current_id && selection.bindings == app.deployment.bindings {
                return true;
            }
            if let Some(current_config) = family.configuration(&current_id) {
                if let Some(current_key) =
                    score_with_bindings(current_config, &app.deployment.bindings, &ctx)
                {
                    if selection.key <= current_key {
                        return true;
                    }
                }
            }
        }
    }

    let config = family.configuration(&selection.config).unwrap();
    let current = (!app.deployment.nodes.is_empty() || !app.deployment.edges.is_empty())
        .then_some((&app.deployment.nodes, &app.deployment.edges));
    let script = match diff_config(current, config, &selection.bindings) {
        Ok(script) => script,
        Err(err) => {
            app.degraded = true;
            app.excluded.insert(selection.config.clone());
            queue_reeval(app, Trigger::Retry);
            let host = app.host.clone();
            let app_name = app.app.clone();
            world.log(
                LogKind::ReconfigurationFailed,
                &host,
                vec![
                    ("app", app_name.to_string()),
                    ("config", selection.config.to_string()),
                    ("cause", err.to_string()),
                    ("trigger", trigger.as_str().to_owned()),
                ],
            );
            return true;
        }
    };

    if script.is_empty() {
        app.deployment.config = Some(selection.config.clone());
        app.deployment.bindings = selection.bindings.clone();
        app.degraded = false;
        return true;
    }
    app.exec = Some(ScriptExecution {
        script,
        phase: ExecPhase::DestroyConduits,
        sent: false,
        pending: Default::default(),
        decision_tick: world.clock.tick,
        trigger,
        failure: None,
    });
    true
}

/// Per-tick retry for degraded applications with a live supervisor.
pub fn queue_degraded_retries(world: &mut World) {
    let alive: Vec<AppId> = world
        .platform
        .apps
        .values()
        .filter(|a| world.hosts.get(&a.host).map(|h| h.alive).unwrap_or(false))
        .map(|a| a.app.clone())
        .collect();
    for app_id in alive {
        let app = world.platform.apps.get_mut(&app_id).unwrap();
        if app.degraded && app.exec.is_none() && app.reeval.is_none() {
            app.reeval = Some(Trigger::Retry);
        }
    }
}
