//! The routing service. Every host runs one instance, light and sensor
//! hosts included: it is the one service that cannot be deported, since
//! without it a host has no idea whom it can still reach.
//!
//! The protocol is plain link-state: hellos detect neighbor changes (a
//! link is declared down after `hello_miss_limit` consecutive misses),
//! changes are flooded as versioned link-state advertisements at one hop
//! per tick, and shortest-path tables are recomputed from the database.
//! An edge counts only when both endpoints advertise it, which ages dead
//! hosts out without ever hearing from them.

use std::collections::{BTreeMap, BTreeSet};

use crate::ids::HostId;
use crate::world::{bfs_hops, World};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lsa {
    pub origin: HostId,
    pub version: u64,
    pub neighbors: BTreeSet<HostId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteEntry {
    pub next_hop: HostId,
    pub hops: u32,
    pub version: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingState {
    /// Declared-up neighbors and their consecutive missed-hello count.
    pub neighbors: BTreeMap<HostId, u32>,
    /// Link-state database, one advertisement per origin.
    pub lsdb: BTreeMap<HostId, Lsa>,
    pub table: BTreeMap<HostId, RouteEntry>,
    /// Destinations currently carrying conduit traffic or control
    /// channels, refcounted by the platform.
    pub in_use: BTreeMap<HostId, u32>,
    /// Advertisements to flood to neighbors on the next tick.
    pub outbox: Vec<Lsa>,
    pub own_version: u64,
    pub table_version: u64,
    dirty: bool,
}

/// Route changes observed by one host during a routing tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouteDelta {
    pub owner: HostId,
    /// In-use destinations that became unreachable.
    pub lost: Vec<HostId>,
    /// In-use destinations whose path changed but remains usable:
    /// (destination, old hops, new hops). Hops are 0/0 for a destination
    /// that just became reachable again.
    pub changed: Vec<(HostId, u32, u32)>,
}

impl RouteDelta {
    pub fn is_empty(&self) -> bool {
        self.lost.is_empty() && self.changed.is_empty()
    }
}

/// Pure read of the owner's current route entry.
pub fn route_lookup(world: &World, host: &HostId, destination: &HostId) -> Option<(HostId, u32)> {
    world
        .routing
        .get(host)?
        .table
        .get(destination)
        .map(|entry| (entry.next_hop.clone(), entry.hops))
}

pub fn add_in_use(world: &mut World, owner: &HostId, destination: &HostId) {
    if owner == destination {
        return;
    }
    if let Some(state) = world.routing.get_mut(owner) {
        *state.in_use.entry(destination.clone()).or_insert(0) += 1;
    }
}

pub fn remove_in_use(world: &mut World, owner: &HostId, destination: &HostId) {
    if let Some(state) = world.routing.get_mut(owner) {
        if let Some(count) = state.in_use.get_mut(destination) {
            *count -= 1;
            if *count == 0 {
                state.in_use.remove(destination);
            }
        }
    }
}

/// Compare two tables from the same owner: alerts for in-use
/// destinations that disappeared, infos for in-use destinations whose
/// path changed or reappeared.
pub fn diff_routes(
    owner: &HostId,
    before: &BTreeMap<HostId, RouteEntry>,
    after: &BTreeMap<HostId, RouteEntry>,
    in_use: &BTreeMap<HostId, u32>,
) -> RouteDelta {
    let mut delta = RouteDelta {
        owner: owner.clone(),
        ..RouteDelta::default()
    };
    for destination in in_use.keys() {
        match (before.get(destination), after.get(destination)) {
            (Some(_), None) => delta.lost.push(destination.clone()),
            (Some(old), Some(new)) => {
                if old.hops != new.hops || old.next_hop != new.next_hop {
                    delta
                        .changed
                        .push((destination.clone(), old.hops, new.hops));
                }
            }
            (None, Some(_)) => delta.changed.push((destination.clone(), 0, 0)),
            (None, None) => {}
        }
    }
    delta
}

/// One routing tick across all hosts: deliver pending floods, run hello
/// detection against the physical link state, recompute tables where the
/// database moved, and report per-host deltas.
pub fn routing_phase(world: &mut World) -> Vec<RouteDelta> {
    let adjacency = world.adjacency();
    let host_ids: Vec<HostId> = world.hosts.keys().cloned().collect();

    // 1. Flood exchange: advertisements queued last tick travel one hop.
    for from in &host_ids {
        if !world.host_alive(from) {
            if let Some(state) = world.routing.get_mut(from) {
                state.outbox.clear();
            }
            continue;
        }
        let outgoing = match world.routing.get_mut(from) {
            Some(state) => std::mem::take(&mut state.outbox),
            None => continue,
        };
        if outgoing.is_empty() {
            continue;
        }
        let neighbors: Vec<HostId> = adjacency.get(from).into_iter().flatten().cloned().collect();
        for neighbor in neighbors {
            if !world.host_alive(&neighbor) {
                continue;
            }
            let state = world.routing.get_mut(&neighbor).unwrap();
            for lsa in &outgoing {
                let newer = state
                    .lsdb
                    .get(&lsa.origin)
                    .map(|known| lsa.version > known.version)
                    .unwrap_or(true);
                if newer {
                    state.lsdb.insert(lsa.origin.clone(), lsa.clone());
                    state.outbox.push(lsa.clone());
                    state.dirty = true;
                }
            }
        }
    }

    // 2. Hello detection against the live link snapshot.
    for host in &host_ids {
        if !world.host_alive(host) {
            continue;
        }
        let current: BTreeSet<HostId> = adjacency.get(host).cloned().unwrap_or_default();
        let miss_limit = world.params.hello_miss_limit;
        let state = world.routing.get_mut(host).unwrap();
        let mut changed = false;
        for neighbor in &current {
            match state.neighbors.get_mut(neighbor) {
                Some(misses) => *misses = 0,
                None => {
                    state.neighbors.insert(neighbor.clone(), 0);
                    changed = true;
                }
            }
        }
        let mut to_drop = Vec::new();
        for (neighbor, misses) in state.neighbors.iter_mut() {
            if !current.contains(neighbor) {
                *misses += 1;
                if *misses >= miss_limit {
                    to_drop.push(neighbor.clone());
                }
            }
        }
        for neighbor in to_drop {
            state.neighbors.remove(&neighbor);
            changed = true;
        }
        if changed {
            state.own_version += 1;
            let lsa = Lsa {
                origin: host.clone(),
                version: state.own_version,
                neighbors: state.neighbors.keys().cloned().collect(),
            };
            state.lsdb.insert(host.clone(), lsa.clone());
            state.outbox.push(lsa);
            state.dirty = true;
        }
    }

    // 3. Recompute dirty tables and report deltas.
    let mut deltas = Vec::new();
    for host in &host_ids {
        if !world.host_alive(host) {
            continue;
        }
        let state = world.routing.get_mut(host).unwrap();
        if !state.dirty {
            continue;
        }
        state.dirty = false;
        let new_table = compute_table(host, state);
        let delta = diff_routes(host, &state.table, &new_table, &state.in_use);
        state.table = new_table;
        if !delta.is_empty() {
            deltas.push(delta);
        }
    }
    deltas
}

/// Shortest-path table from the owner's database. Only links both sides
/// advertise count. Equal-cost ties break toward the lowest next-hop id.
fn compute_table(owner: &HostId, state: &mut RoutingState) -> BTreeMap<HostId, RouteEntry> {
    let mut adj: BTreeMap<HostId, BTreeSet<HostId>> = BTreeMap::new();
    for (origin, lsa) in &state.lsdb {
        for neighbor in &lsa.neighbors {
            let mutual = state
                .lsdb
                .get(neighbor)
                .map(|other| other.neighbors.contains(origin))
                .unwrap_or(false);
            if mutual {
                adj.entry(origin.clone())
                    .or_default()
                    .insert(neighbor.clone());
                adj.entry(neighbor.clone())
                    .or_default()
                    .insert(origin.clone());
            }
        }
    }
    adj.entry(owner.clone()).or_default();

    state.table_version += 1;
    let version = state.table_version;
    let own_hops = bfs_hops(&adj, owner);
    let own_neighbors: Vec<HostId> = adj.get(owner).into_iter().flatten().cloned().collect();

    let mut table = BTreeMap::new();
    table.insert(
        owner.clone(),
        carry_version(
            state,
            owner,
            RouteEntry {
                next_hop: owner.clone(),
                hops: 0,
                version,
            },
        ),
    );
    for (destination, hops) in &own_hops {
        if destination == owner {
            continue;
        }
        // BFS from the destination: the next hop is the lowest-id
        // neighbor sitting one step closer.
        let from_destination = bfs_hops(&adj, destination);
        let next_hop = own_neighbors
            .iter()
            .find(|n| {
                from_destination
                    .get(*n)
                    .map(|d| d + 1 == *hops)
                    .unwrap_or(false)
            })
            .cloned();
        if let Some(next_hop) = next_hop {
            table.insert(
                destination.clone(),
                carry_version(
                    state,
                    destination,
                    RouteEntry {
                        next_hop,
                        hops: *hops,
                        version,
                    },
                ),
            );
        }
    }
    table
}

/// Keep the stored version when an entry is unchanged, so versions only
/// move when routes do.
fn carry_version(state: &RoutingState, destination: &HostId, fresh: RouteEntry) -> RouteEntry {
    match state.table.get(destination) {
        Some(old) if old.next_hop == fresh.next_hop && old.hops == fresh.hops => old.clone(),
        _ => fresh,
    }
}

/// Seed every live host with a converged view of the current topology.
/// The platform assumes the network layer was up before the application
/// started; tests that exercise convergence introduce changes afterwards.
pub fn init_converged(world: &mut World) {
    let adjacency = world.adjacency();
    let host_ids: Vec<HostId> = world.hosts.keys().cloned().collect();
    let mut lsdb = BTreeMap::new();
    for host in &host_ids {
        if !world.host_alive(host) {
            continue;
        }
        lsdb.insert(
            host.clone(),
            Lsa {
                origin: host.clone(),
                version: 1,
                neighbors: adjacency.get(host).cloned().unwrap_or_default(),
            },
        );
    }
    for host in &host_ids {
        let alive = world.host_alive(host);
        let state = world.routing.entry(host.clone()).or_default();
        if !alive {
            continue;
        }
        state.neighbors = adjacency
            .get(host)
            .into_iter()
            .flatten()
            .map(|n| (n.clone(), 0))
            .collect();
        state.lsdb = lsdb.clone();
        state.own_version = 1;
        let table = compute_table(host, state);
        state.table = table;
        state.dirty = false;
        state.outbox.clear();
    }
}

/// Run the routing phase repeatedly with the clock advancing; test helper
/// for converging a fresh world.
pub fn settle(world: &mut World, ticks: u32) {
    for _ in 0..ticks {
        routing_phase(world);
        world.clock.tick += 1;
    }
}

/// True when the host's table agrees with ground-truth reachability and
/// shortest-path lengths over the live topology.
pub fn table_matches_ground_truth(world: &World, host: &HostId) -> bool {
    let Some(state) = world.routing.get(host) else {
        return false;
    };
    let truth = world.hops_from(host);
    for (destination, hops) in &truth {
        if !world.host_alive(destination) {
            continue;
        }
        match state.table.get(destination) {
            Some(entry) if entry.hops == *hops => {}
            _ => return false,
        }
    }
    for destination in state.table.keys() {
        if !truth.contains_key(destination) {
            return false;
        }
    }
    true
}
