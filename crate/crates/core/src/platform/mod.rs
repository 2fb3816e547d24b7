//! The distributed platform: supervision, the two factories and their
//! message plumbing. Everything runs inside the deterministic platform
//! phase of each tick.

pub mod factory;
pub mod message;
pub mod migration;
pub mod plan;
pub mod state;
pub mod supervisor;

use crate::ids::HostId;
use crate::routing::RouteDelta;
use crate::transport::{Envelope, MessageBody, Priority};
use crate::world::{HostClass, World};

/// Safety bound on intra-tick processing rounds. Local message chains
/// (self-deliveries and their follow-ups) settle well below this.
const MAX_ROUNDS: usize = 32;

/// The platform phase of one tick: dispatch route events, then alternate
/// message processing and supervisor progress until nothing moves.
pub fn platform_phase(world: &mut World, route_deltas: Vec<RouteDelta>) {
    dispatch_route_events(world, route_deltas);
    supervisor::queue_degraded_retries(world);

    for _ in 0..MAX_ROUNDS {
        let mut moved = process_inboxes(world);
        moved |= migration::migration_sweep(world);
        moved |= supervisor::supervisor_phase(world);
        if !moved {
            break;
        }
    }
}

/// Forward routing deltas as ROUTE_ALERT / ROUTE_INFO messages to the
/// owner's supervising host: the correspondent for supervised light
/// hosts, the application supervisors otherwise. Local recipients see
/// the message within the same tick.
fn dispatch_route_events(world: &mut World, deltas: Vec<RouteDelta>) {
    for delta in deltas {
        let owner = delta.owner.clone();
        let targets = supervising_hosts(world, &owner);
        for lost in delta.lost {
            for target in &targets {
                let message = message::PlatformMessage::RouteAlert {
                    owner: owner.clone(),
                    lost: lost.clone(),
                };
                factory::send_or_drop(world, &owner, target, Priority::High, message);
            }
        }
        for (destination, old_hops, new_hops) in delta.changed {
            for target in &targets {
                let message = message::PlatformMessage::RouteInfo {
                    owner: owner.clone(),
                    destination: destination.clone(),
                    old_hops,
                    new_hops,
                };
                factory::send_or_drop(world, &owner, target, Priority::Normal, message);
            }
        }
    }
}

fn supervising_hosts(world: &World, owner: &HostId) -> Vec<HostId> {
    if world.hosts.get(owner).map(|h| h.class) == Some(HostClass::Light) {
        if let Some(correspondent) = world.platform.correspondents.get(owner) {
            return vec![correspondent.clone()];
        }
    }
    let mut supervisors: Vec<HostId> = world
        .platform
        .apps
        .values()
        .map(|a| a.host.clone())
        .collect();
    supervisors.sort();
    supervisors.dedup();
    supervisors
}

/// Drain every host inbox once, priority messages first, message order
/// within a class by emission sequence. Returns true when anything was
/// processed.
/// Priority messages first, then emission order within each class.
fn sort_inbox(batch: &mut [Envelope]) {
    batch.sort_by_key(|e| (std::cmp::Reverse(e.priority), e.seq));
}

fn process_inboxes(world: &mut World) -> bool {
    let mut processed = false;
    let hosts: Vec<HostId> = world.hosts.keys().cloned().collect();
    for host in hosts {
        if !world.host_alive(&host) {
            world.inboxes.remove(&host);
            continue;
        }
        let Some(queue) = world.inboxes.get_mut(&host) else {
            continue;
        };
        if queue.is_empty() {
            continue;
        }
        let mut batch: Vec<Envelope> = std::mem::take(queue);
        sort_inbox(&mut batch);
        for envelope in batch {
            processed = true;
            match &envelope.body {
                MessageBody::Platform(_) => factory::handle_message(world, &host, envelope),
                MessageBody::Data { .. } => {
                    // Data frames are routed to conduit buffers by the
                    // transport; nothing should land here.
                }
            }
        }
    }
    processed
}
