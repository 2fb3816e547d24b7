//! Orphan control-unit migration. When a light host can no longer reach
//! the correspondent hosting its deported control units, the local stub
//! picks the nearest reachable fixed host and asks it to adopt them. If
//! no fixed host is reachable the components are flagged unsupervised
//! and the attempt repeats every tick; local data flow continues either
//! way.

use crate::ids::HostId;
use crate::model::control::SubjectId;
use crate::model::pe::ControlPlacement;
use crate::platform::message::{MigratePhase, PlatformMessage, UcSnapshot};
use crate::platform::plan::{assign_correspondent, FragmentKind};
use crate::routing;
use crate::transport::Priority;
use crate::world::World;

/// Retry window for an unanswered migration request, in ticks.
const MIGRATION_RETRY_TICKS: u64 = 4;

/// One pass over all light hosts with split control units whose logic
/// side became unreachable. Returns true when any request was sent.
pub fn migration_sweep(world: &mut World) -> bool {
    let light_hosts: Vec<HostId> = world
        .hosts
        .values()
        .filter(|h| h.alive && h.class == crate::world::HostClass::Light)
        .map(|h| h.id.clone())
        .collect();
    let mut sent = false;
    for light in light_hosts {
        sent |= sweep_host(world, &light);
    }
    sent
}

fn orphaned_subjects(
    world: &World,
    light: &HostId,
) -> Vec<(SubjectId, FragmentKind, Option<HostId>)> {
    let mut orphans = Vec::new();
    for pe in world.pes.values() {
        if let ControlPlacement::Split { stub_on, logic_on } = &pe.control {
            if stub_on == light && logic_unreachable(world, light, logic_on) {
                orphans.push((
                    SubjectId::Pe(pe.id.clone()),
                    FragmentKind::ControlLogic,
                    Some(logic_on.clone()),
                ));
            }
        }
    }
    for conduit in world.conduits.values() {
        if let ControlPlacement::Split { stub_on, logic_on } = &conduit.control {
            if stub_on == light && logic_unreachable(world, light, logic_on) {
                orphans.push((
                    SubjectId::Conduit(conduit.id.clone()),
                    FragmentKind::ConduitControl,
                    Some(logic_on.clone()),
                ));
            }
        }
    }
    orphans
}

fn logic_unreachable(world: &World, light: &HostId, logic: &HostId) -> bool {
    !world.host_alive(logic) || routing::route_lookup(world, light, logic).is_none()
}

fn sweep_host(world: &mut World, light: &HostId) -> bool {
    let orphans = orphaned_subjects(world, light);
    if orphans.is_empty() {
        return false;
    }
    let tick = world.clock.tick;
    {
        let stub = world.platform.stubs.entry(light.clone()).or_default();
        if let Some(since) = stub.pending_since {
            if tick.saturating_sub(since) < MIGRATION_RETRY_TICKS {
                return false;
            }
        }
    }

    match assign_correspondent(world, light) {
        Ok(new_correspondent) => {
            let old = orphans.iter().find_map(|(_, _, old)| old.clone());
            let snapshots: Vec<UcSnapshot> = orphans
                .iter()
                .map(|(subject, fragment, _)| UcSnapshot {
                    subject: subject.clone(),
                    fragment: *fragment,
                    last_report: world.state_report(subject).ok(),
                })
                .collect();
            let message = PlatformMessage::MigrateUc {
                light: light.clone(),
                old_correspondent: old,
                phase: MigratePhase::Request,
                snapshots,
            };
            crate::platform::factory::send_or_drop(
                world,
                &light.clone(),
                &new_correspondent,
                Priority::Normal,
                message,
            );
            world
                .platform
                .stubs
                .entry(light.clone())
                .or_default()
                .pending_since = Some(tick);
            true
        }
        Err(_) => {
            // No fixed host in reach: run unsupervised, retry next tick.
            for (subject, _, _) in &orphans {
                if let SubjectId::Pe(id) = subject {
                    if let Some(pe) = world.pes.get_mut(id) {
                        pe.unsupervised = true;
                    }
                }
            }
            world
                .platform
                .stubs
                .entry(light.clone())
                .or_default()
                .pending_since = None;
            false
        }
    }
}
