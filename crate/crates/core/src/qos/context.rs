//! Context snapshots: the frozen view of the world that validity,
//! scoring and selection work from. Snapshots are self-contained values
//! so decisions can be replayed and checked offline.

use std::collections::{BTreeMap, BTreeSet};

use crate::ids::{AppId, CmId, HostId};
use crate::model::descriptor::BusinessComponentDescriptor;
use crate::params::SimParams;
use crate::world::{bfs_hops, HostClass, LinkKind, World};

#[derive(Debug, Clone, PartialEq)]
pub struct HostView {
    pub class: HostClass,
    pub alive: bool,
    pub battery: i64,
    /// Free memory, counting the supervised application's own fragments
    /// as released: scripts destroy before they create.
    pub free_memory: u64,
    pub capabilities: BTreeSet<String>,
    pub package: BTreeSet<CmId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextSnapshot {
    pub tick: u64,
    pub app: AppId,
    pub supervisor: HostId,
    pub hosts: BTreeMap<HostId, HostView>,
    /// Pairwise hop counts over live links; absent pairs are unreachable.
    pub hops: BTreeMap<(HostId, HostId), u32>,
    /// Host pairs whose tie-broken shortest path crosses a wireless link.
    pub wireless_paths: BTreeSet<(HostId, HostId)>,
    pub params: SimParams,
    pub repository: BTreeMap<CmId, BusinessComponentDescriptor>,
}

impl ContextSnapshot {
    /// Capture the world as seen by one application's supervisor.
    pub fn capture(world: &World, app: &AppId) -> Self {
        let supervisor = world
            .platform
            .apps
            .get(app)
            .map(|a| a.host.clone())
            .unwrap_or_else(|| HostId::new(""));

        // Memory currently held by this application, per host.
        let mut held: BTreeMap<HostId, u64> = BTreeMap::new();
        if let Some(sup) = world.platform.apps.get(app) {
            {
                let deployment = &sup.deployment;
                for pe_id in deployment.nodes.values() {
                    if let Some(pe) = world.pes.get(pe_id) {
                        let footprint = world
                            .repository
                            .get(&pe.cm)
                            .map(|d| d.memory_footprint)
                            .unwrap_or(0);
                        for (fragment, host) in &pe.placement {
                            *held.entry(host.clone()).or_insert(0) +=
                                fragment.footprint(footprint, &world.params.footprints);
                        }
                    }
                }
                for conduit_id in deployment.edges.values() {
                    if let Some(conduit) = world.conduits.get(conduit_id) {
                        for (fragment, host) in &conduit.placement {
                            *held.entry(host.clone()).or_insert(0) +=
                                fragment.footprint(0, &world.params.footprints);
                        }
                    }
                }
            }
        }

        let hosts: BTreeMap<HostId, HostView> = world
            .hosts
            .iter()
            .map(|(id, host)| {
                let released = held.get(id).copied().unwrap_or(0);
                (
                    id.clone(),
                    HostView {
                        class: host.class,
                        alive: host.alive,
                        battery: host.battery(),
                        free_memory: (host.free_memory() + released).min(host.memory_capacity),
                        capabilities: host.sensing_capabilities.clone(),
                        package: host.preloaded_repository.clone(),
                    },
                )
            })
            .collect();

        let adjacency = world.adjacency();
        let host_ids: Vec<HostId> = world.hosts.keys().cloned().collect();
        let mut hops = BTreeMap::new();
        let mut wireless_paths = BTreeSet::new();
        for src in &host_ids {
            if !world.host_alive(src) {
                continue;
            }
            let dist = bfs_hops(&adjacency, src);
            for (dst, d) in &dist {
                if !world.host_alive(dst) {
                    continue;
                }
                hops.insert((src.clone(), dst.clone()), *d);
                if *d > 0 && path_crosses_wireless(world, &adjacency, &dist, src, dst) {
                    wireless_paths.insert((src.clone(), dst.clone()));
                }
            }
        }

        ContextSnapshot {
            tick: world.clock.tick,
            app: app.clone(),
            supervisor,
            hosts,
            hops,
            wireless_paths,
            params: world.params.clone(),
            repository: world.repository.clone(),
        }
    }

    pub fn hops_between(&self, a: &HostId, b: &HostId) -> Option<u32> {
        self.hops.get(&(a.clone(), b.clone())).copied()
    }

    pub fn reachable(&self, a: &HostId, b: &HostId) -> bool {
        self.hops_between(a, b).is_some()
    }

    pub fn host(&self, id: &HostId) -> Option<&HostView> {
        self.hosts.get(id)
    }
}

/// Walk the deterministic shortest path (lowest-id predecessor at every
/// step) from dst back to src and check whether any hop is wireless.
fn path_crosses_wireless(
    world: &World,
    adjacency: &BTreeMap<HostId, BTreeSet<HostId>>,
    dist_from_src: &BTreeMap<HostId, u32>,
    src: &HostId,
    dst: &HostId,
) -> bool {
    let mut current = dst.clone();
    while &current != src {
        let d = dist_from_src[&current];
        let predecessor = adjacency
            .get(&current)
            .into_iter()
            .flatten()
            .find(|n| dist_from_src.get(*n).map(|nd| nd + 1 == d).unwrap_or(false))
            .cloned()
            .expect("BFS distances guarantee a predecessor");
        if world.link_kind(&predecessor, &current) == Some(LinkKind::Wireless) {
            return true;
        }
        current = predecessor;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{line_world, simple_world};
    use crate::world::norm_pair;

    #[test]
    fn snapshot_reflects_reachability_and_wireless_crossings() {
        let mut world = line_world(&[("A", HostClass::Fixed), ("B", HostClass::Light)]);
        // A wired pair far away, unreachable from the radio island.
        world.hosts.insert(
            "X".into(),
            crate::testutil::mk_host("X", HostClass::Fixed, (900.0, 0.0), None),
        );
        world.hosts.insert(
            "Y".into(),
            crate::testutil::mk_host("Y", HostClass::Fixed, (910.0, 0.0), None),
        );
        world.routing.insert("X".into(), Default::default());
        world.routing.insert("Y".into(), Default::default());
        world
            .wired_links
            .insert(norm_pair(&"X".into(), &"Y".into()));

        let ctx = ContextSnapshot::capture(&world, &"app".into());
        assert_eq!(ctx.hops_between(&"A".into(), &"B".into()), Some(1));
        assert_eq!(ctx.hops_between(&"X".into(), &"Y".into()), Some(1));
        assert!(!ctx.reachable(&"A".into(), &"X".into()));
        assert!(ctx.wireless_paths.contains(&("A".into(), "B".into())));
        assert!(!ctx.wireless_paths.contains(&("X".into(), "Y".into())));
    }

    #[test]
    fn dead_hosts_have_no_hop_entries() {
        let mut world = simple_world(&[
            ("A", HostClass::Fixed, (0.0, 0.0), Some(10.0)),
            ("B", HostClass::Light, (5.0, 0.0), Some(10.0)),
        ]);
        world.kill_host(&"B".into(), "test");
        let ctx = ContextSnapshot::capture(&world, &"app".into());
        assert!(!ctx.reachable(&"A".into(), &"B".into()));
        assert!(!ctx.host(&"B".into()).unwrap().alive);
    }
}
