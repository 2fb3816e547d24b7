//! Validity, scoring and selection over configuration families.
//!
//! Scoring is lexicographic: designer QoS level first, then the
//! estimated per-tick energy burden on light and sensor hosts, then the
//! number of conduits whose path crosses a wireless link, then the
//! configuration id. The id tie-break makes the order total, so argmax
//! is unique and selection is deterministic.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::ids::{ConfigId, HostId, NodeId};
use crate::qos::context::{ContextSnapshot, HostView};
use crate::qos::graph::{ConfigNode, ConfigurationFamily, ConfigurationGraph, HostBinding};
use crate::world::HostClass;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreKey {
    pub qos_level: u64,
    pub energy_rate: u64,
    pub wireless_conduits: u64,
    pub config: ConfigId,
}

impl Ord for ScoreKey {
    fn cmp(&self, other: &Self) -> Ordering {
        // Greater means better: higher level, then lower energy, fewer
        // wireless crossings, lower id.
        self.qos_level
            .cmp(&other.qos_level)
            .then_with(|| other.energy_rate.cmp(&self.energy_rate))
            .then_with(|| other.wireless_conduits.cmp(&self.wireless_conduits))
            .then_with(|| other.config.cmp(&self.config))
    }
}

impl PartialOrd for ScoreKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub type Bindings = BTreeMap<NodeId, HostId>;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub config: ConfigId,
    pub key: ScoreKey,
    pub bindings: Bindings,
}

pub fn local_footprint(ctx: &ContextSnapshot, class: HostClass, cm_footprint: u64) -> u64 {
    crate::platform::plan::local_pe_fragments(class)
        .iter()
        .map(|f| f.footprint(cm_footprint, &ctx.params.footprints))
        .sum()
}

/// Why a node cannot live on a host, or None when it can. `committed`
/// is extra memory already promised to other nodes during binding.
fn placement_obstacle(
    ctx: &ContextSnapshot,
    node: &ConfigNode,
    host_id: &HostId,
    view: &HostView,
    committed: u64,
) -> Option<String> {
    if !view.alive {
        return Some(format!("host {host_id} is dead"));
    }
    let descriptor = match ctx.repository.get(&node.cm) {
        Some(d) => d,
        None => return Some(format!("unknown descriptor {}", node.cm)),
    };
    if let Some(capability) = descriptor.required_capability() {
        if !view.capabilities.contains(capability) {
            return Some(format!("host {host_id} lacks capability {capability}"));
        }
    }
    if view.class == HostClass::Sensor && !view.package.contains(&node.cm) {
        return Some(format!("{} is outside the package of {host_id}", node.cm));
    }
    if !ctx.reachable(&ctx.supervisor, host_id) {
        return Some(format!("host {host_id} is unreachable from the supervisor"));
    }
    if view.class == HostClass::Light {
        let has_correspondent = ctx
            .hosts
            .iter()
            .any(|(id, h)| h.alive && h.class == HostClass::Fixed && ctx.reachable(host_id, id));
        if !has_correspondent {
            return Some(format!("no correspondent reachable from {host_id}"));
        }
    }
    let needed = local_footprint(ctx, view.class, descriptor.memory_footprint);
    if view.free_memory < committed + needed {
        return Some(format!(
            "host {host_id} lacks memory: need {needed}, free {}",
            view.free_memory.saturating_sub(committed)
        ));
    }
    None
}

/// Validity: every node can be placed somewhere admissible and every
/// edge's endpoints can talk. Nodes are checked independently, so adding
/// resources to the context never invalidates a configuration.
pub fn is_valid(config: &ConfigurationGraph, ctx: &ContextSnapshot) -> (bool, Vec<String>) {
    let mut violations = Vec::new();
    for node in &config.nodes {
        match &node.bind {
            HostBinding::Host(host_id) => match ctx.host(host_id) {
                Some(view) => {
                    if let Some(obstacle) = placement_obstacle(ctx, node, host_id, view, 0) {
                        violations.push(format!("node {}: {obstacle}", node.id));
                    }
                }
                None => violations.push(format!("node {}: unknown host {host_id}", node.id)),
            },
            HostBinding::Class(class) => {
                let found = ctx.hosts.iter().any(|(host_id, view)| {
                    view.class == *class
                        && placement_obstacle(ctx, node, host_id, view, 0).is_none()
                });
                if !found {
                    violations.push(format!("no host for node {}", node.id));
                }
            }
        }
    }
    // Explicitly pinned edges get a direct mutual-reachability check;
    // class-bound nodes are already forced reachable via the supervisor.
    for edge in &config.edges {
        let (Some(from), Some(to)) = (config.node(&edge.from), config.node(&edge.to)) else {
            continue;
        };
        if let (HostBinding::Host(a), HostBinding::Host(b)) = (&from.bind, &to.bind) {
            if ctx.host(a).map(|v| v.alive).unwrap_or(false)
                && ctx.host(b).map(|v| v.alive).unwrap_or(false)
                && !ctx.reachable(a, b)
            {
                violations.push(format!(
                    "edge {} -> {}: hosts {a} and {b} are mutually unreachable",
                    edge.from, edge.to
                ));
            }
        }
    }
    (violations.is_empty(), violations)
}

/// Resolve class constraints to concrete hosts: nodes bind in declaration
/// order to the eligible host nearest the data source node (the
/// supervisor anchors the source itself), lowest id on ties. Memory is
/// committed as binding proceeds and one host never hosts the same
/// component twice.
pub fn resolve_bindings(
    config: &ConfigurationGraph,
    ctx: &ContextSnapshot,
) -> std::result::Result<Bindings, String> {
    let source_id = config.data_source_node().map(|n| n.id.clone());
    let mut bindings: Bindings = BTreeMap::new();
    let mut committed: BTreeMap<HostId, u64> = BTreeMap::new();
    let mut used: BTreeSet<(crate::ids::CmId, HostId)> = BTreeSet::new();

    for node in &config.nodes {
        let descriptor = ctx
            .repository
            .get(&node.cm)
            .ok_or_else(|| format!("unknown descriptor {}", node.cm))?;
        let anchor: HostId = source_id
            .as_ref()
            .filter(|src| *src != &node.id)
            .and_then(|src| bindings.get(src).cloned())
            .unwrap_or_else(|| ctx.supervisor.clone());

        let chosen = match &node.bind {
            HostBinding::Host(host_id) => {
                let view = ctx
                    .host(host_id)
                    .ok_or_else(|| format!("unknown host {host_id}"))?;
                let already = committed.get(host_id).copied().unwrap_or(0);
                if let Some(obstacle) = placement_obstacle(ctx, node, host_id, view, already) {
                    return Err(format!("node {}: {obstacle}", node.id));
                }
                host_id.clone()
            }
            HostBinding::Class(class) => {
                let mut best: Option<(u32, HostId)> = None;
                for (host_id, view) in &ctx.hosts {
                    if view.class != *class {
                        continue;
                    }
                    if used.contains(&(node.cm.clone(), host_id.clone())) {
                        continue;
                    }
                    let already = committed.get(host_id).copied().unwrap_or(0);
                    if placement_obstacle(ctx, node, host_id, view, already).is_some() {
                        continue;
                    }
                    let Some(hops) = ctx.hops_between(&anchor, host_id) else {
                        continue;
                    };
                    let key = (hops, host_id.clone());
                    if best.as_ref().map(|b| key < *b).unwrap_or(true) {
                        best = Some(key);
                    }
                }
                best.map(|(_, id)| id)
                    .ok_or_else(|| format!("no host for node {}", node.id))?
            }
        };

        let view = ctx.host(&chosen).unwrap();
        let needed = local_footprint(ctx, view.class, descriptor.memory_footprint);
        *committed.entry(chosen.clone()).or_insert(0) += needed;
        used.insert((node.cm.clone(), chosen.clone()));
        bindings.insert(node.id.clone(), chosen);
    }
    Ok(bindings)
}

/// The estimated per-tick energy burden a bound configuration puts on
/// light and sensor hosts: component activations, inter-host frame
/// traffic, and one control message per deported control channel.
pub fn energy_rate(config: &ConfigurationGraph, bindings: &Bindings, ctx: &ContextSnapshot) -> u64 {
    let mut rate = 0u64;
    let class_of = |node: &NodeId| -> Option<(HostId, HostClass)> {
        let host = bindings.get(node)?;
        Some((host.clone(), ctx.host(host)?.class))
    };
    for node in &config.nodes {
        let Some((_, class)) = class_of(&node.id) else {
            continue;
        };
        if class == HostClass::Fixed {
            continue;
        }
        if let Some(descriptor) = ctx.repository.get(&node.cm) {
            rate += descriptor.cpu_cost;
        }
        if class == HostClass::Light {
            // Stub-to-logic control channel.
            rate += ctx.params.tx_cost(ctx.params.control_bytes);
        }
    }
    for edge in &config.edges {
        let (Some((src_host, src_class)), Some((dst_host, dst_class))) =
            (class_of(&edge.from), class_of(&edge.to))
        else {
            continue;
        };
        if src_host == dst_host {
            continue;
        }
        let frame_bytes = ctx.params.default_frame_bytes;
        if src_class != HostClass::Fixed {
            rate += ctx.params.tx_cost(frame_bytes);
        }
        if dst_class != HostClass::Fixed {
            rate += ctx.params.rx_cost(frame_bytes);
        }
        // Conduit endpoint stubs on light hosts keep their own control
        // channel toward the deported conduit control.
        if src_class == HostClass::Light {
            rate += ctx.params.tx_cost(ctx.params.control_bytes);
        }
        if dst_class == HostClass::Light {
            rate += ctx.params.tx_cost(ctx.params.control_bytes);
        }
    }
    rate
}

/// Conduits whose endpoint hosts differ and whose path crosses at least
/// one wireless link.
pub fn wireless_conduits(
    config: &ConfigurationGraph,
    bindings: &Bindings,
    ctx: &ContextSnapshot,
) -> u64 {
    config
        .edges
        .iter()
        .filter(|edge| {
            let (Some(a), Some(b)) = (bindings.get(&edge.from), bindings.get(&edge.to)) else {
                return false;
            };
            a != b && ctx.wireless_paths.contains(&(a.clone(), b.clone()))
        })
        .count() as u64
}

/// Score a configuration. Errors when the configuration is not valid in
/// this context.
pub fn score(config: &ConfigurationGraph, ctx: &ContextSnapshot) -> Result<ScoreKey> {
    match evaluate(config, ctx) {
        Some((key, _)) => Ok(key),
        None => {
            let (_, violations) = is_valid(config, ctx);
            Err(Error::InvalidConfiguration {
                config: config.id.clone(),
                reason: violations
                    .first()
                    .cloned()
                    .unwrap_or_else(|| "unbindable".into()),
            })
        }
    }
}

/// Score a configuration against a concrete binding, e.g. the one
/// actually deployed, returning None when any bound host no longer
/// admits its node. Used for reconfiguration hysteresis.
pub fn score_with_bindings(
    config: &ConfigurationGraph,
    bindings: &Bindings,
    ctx: &ContextSnapshot,
) -> Option<ScoreKey> {
    for node in &config.nodes {
        let host_id = bindings.get(&node.id)?;
        let view = ctx.host(host_id)?;
        if !view.alive || !ctx.reachable(&ctx.supervisor, host_id) {
            return None;
        }
        let descriptor = ctx.repository.get(&node.cm)?;
        if let Some(capability) = descriptor.required_capability() {
            if !view.capabilities.contains(capability) {
                return None;
            }
        }
    }
    Some(ScoreKey {
        qos_level: config.qos_level,
        energy_rate: energy_rate(config, bindings, ctx),
        wireless_conduits: wireless_conduits(config, bindings, ctx),
        config: config.id.clone(),
    })
}

/// The full evaluation pipeline: validity, binding, score.
pub fn evaluate(
    config: &ConfigurationGraph,
    ctx: &ContextSnapshot,
) -> Option<(ScoreKey, Bindings)> {
    let (valid, _) = is_valid(config, ctx);
    if !valid {
        return None;
    }
    let bindings = resolve_bindings(config, ctx).ok()?;
    let key = ScoreKey {
        qos_level: config.qos_level,
        energy_rate: energy_rate(config, &bindings, ctx),
        wireless_conduits: wireless_conduits(config, &bindings, ctx),
        config: config.id.clone(),
    };
    Some((key, bindings))
}

/// Argmax of the score over valid configurations; None when nothing in
/// the family is deployable.
pub fn select(family: &ConfigurationFamily, ctx: &ContextSnapshot) -> Option<Selection> {
    select_excluding(family, ctx, &BTreeSet::new())
}

pub fn select_excluding(
    family: &ConfigurationFamily,
    ctx: &ContextSnapshot,
    excluded: &BTreeSet<ConfigId>,
) -> Option<Selection> {
    family
        .configurations
        .iter()
        .filter(|config| !excluded.contains(&config.id))
        .filter_map(|config| {
            evaluate(config, ctx).map(|(key, bindings)| Selection {
                config: config.id.clone(),
                key,
                bindings,
            })
        })
        .max_by(|a, b| a.key.cmp(&b.key))
}
