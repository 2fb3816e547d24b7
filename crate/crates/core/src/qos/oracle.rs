//! Exhaustive configuration ranking, kept deliberately independent of
//! the selection path: validity and score are re-derived here with
//! straight-line code, every configuration is evaluated, and the whole
//! family is sorted with an explicit comparator. Selection must agree
//! with the top of this ranking on every input; the acceptance suite
//! enforces exactly that.

use std::cmp::Ordering;

use crate::ids::{ConfigId, HostId};
use crate::qos::context::ContextSnapshot;
use crate::qos::graph::{ConfigurationFamily, ConfigurationGraph, HostBinding};
use crate::qos::select::resolve_bindings;
use crate::world::HostClass;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub config: ConfigId,
    pub qos_level: u64,
    pub valid: bool,
    pub violations: Vec<String>,
    pub energy_rate: Option<u64>,
    pub wireless_conduits: Option<u64>,
}

/// Can this node live on this host? A plain re-statement of the
/// placement rules, used only by the oracle.
fn host_admissible(
    ctx: &ContextSnapshot,
    cm: &crate::ids::CmId,
    host_id: &HostId,
) -> std::result::Result<(), String> {
    let Some(view) = ctx.host(host_id) else {
        return Err(format!("unknown host {host_id}"));
    };
    if !view.alive {
        return Err(format!("host {host_id} is dead"));
    }
    let Some(descriptor) = ctx.repository.get(cm) else {
        return Err(format!("unknown descriptor {cm}"));
    };
    match descriptor.required_capability() {
        Some(capability) if !view.capabilities.contains(capability) => {
            return Err(format!("host {host_id} lacks capability {capability}"));
        }
        _ => {}
    }
    if view.class == HostClass::Sensor && !view.package.contains(cm) {
        return Err(format!("{cm} is outside the package of {host_id}"));
    }
    if !ctx
        .hops
        .contains_key(&(ctx.supervisor.clone(), host_id.clone()))
    {
        return Err(format!("host {host_id} is unreachable from the supervisor"));
    }
    if view.class == HostClass::Light {
        let mut reachable_fixed = false;
        for (candidate, candidate_view) in &ctx.hosts {
            if candidate_view.alive
                && candidate_view.class == HostClass::Fixed
                && ctx.hops.contains_key(&(host_id.clone(), candidate.clone()))
            {
                reachable_fixed = true;
                break;
            }
        }
        if !reachable_fixed {
            return Err(format!("no correspondent reachable from {host_id}"));
        }
    }
    let per_unit = &ctx.params.footprints;
    let mut needed = descriptor.memory_footprint + per_unit.input_unit + per_unit.output_unit;
    needed += match view.class {
        HostClass::Light => per_unit.control_stub,
        HostClass::Fixed | HostClass::Sensor => per_unit.control_full,
    };
    if view.free_memory < needed {
        return Err(format!("host {host_id} lacks memory for {cm}"));
    }
    Ok(())
}

fn check_validity(config: &ConfigurationGraph, ctx: &ContextSnapshot) -> Vec<String> {
    let mut violations = Vec::new();
    for node in &config.nodes {
        match &node.bind {
            HostBinding::Host(host_id) => {
                if let Err(obstacle) = host_admissible(ctx, &node.cm, host_id) {
                    violations.push(format!("node {}: {obstacle}", node.id));
                }
            }
            HostBinding::Class(class) => {
                let mut placed = false;
                for (host_id, view) in &ctx.hosts {
                    if view.class == *class && host_admissible(ctx, &node.cm, host_id).is_ok() {
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    violations.push(format!("no host for node {}", node.id));
                }
            }
        }
    }
    for edge in &config.edges {
        let from = config.node(&edge.from);
        let to = config.node(&edge.to);
        if let (Some(from), Some(to)) = (from, to) {
            if let (HostBinding::Host(a), HostBinding::Host(b)) = (&from.bind, &to.bind) {
                let both_alive = ctx.host(a).map(|v| v.alive).unwrap_or(false)
                    && ctx.host(b).map(|v| v.alive).unwrap_or(false);
                if both_alive && !ctx.hops.contains_key(&(a.clone(), b.clone())) {
                    violations.push(format!(
                        "edge {} -> {}: hosts {a} and {b} are mutually unreachable",
                        edge.from, edge.to
                    ));
                }
            }
        }
    }
    violations
}

/// Recompute the energy estimate from first principles: walk nodes, walk
/// edges, add up radio and cpu costs on constrained hosts.
fn recompute_energy(
    config: &ConfigurationGraph,
    bindings: &std::collections::BTreeMap<crate::ids::NodeId, HostId>,
    ctx: &ContextSnapshot,
) -> u64 {
    let alpha = ctx.params.alpha;
    let beta = ctx.params.beta_millis;
    let gamma = ctx.params.gamma_millis;
    let frame = ctx.params.default_frame_bytes;
    let control = ctx.params.control_bytes;
    let tx_frame = alpha + beta * frame / 1000;
    let rx_frame = gamma * frame / 1000;
    let tx_control = alpha + beta * control / 1000;

    let mut total = 0u64;
    for node in &config.nodes {
        let host = &bindings[&node.id];
        let class = ctx.hosts[host].class;
        if class == HostClass::Fixed {
            continue;
        }
        total += ctx.repository[&node.cm].cpu_cost;
        if class == HostClass::Light {
            total += tx_control;
        }
    }
    for edge in &config.edges {
        let src = &bindings[&edge.from];
        let dst = &bindings[&edge.to];
        if src == dst {
            continue;
        }
        let src_class = ctx.hosts[src].class;
        let dst_class = ctx.hosts[dst].class;
        if src_class != HostClass::Fixed {
            total += tx_frame;
        }
        if dst_class != HostClass::Fixed {
            total += rx_frame;
        }
        if src_class == HostClass::Light {
            total += tx_control;
        }
        if dst_class == HostClass::Light {
            total += tx_control;
        }
    }
    total
}

fn recompute_wireless(
    config: &ConfigurationGraph,
    bindings: &std::collections::BTreeMap<crate::ids::NodeId, HostId>,
    ctx: &ContextSnapshot,
) -> u64 {
    let mut count = 0u64;
    for edge in &config.edges {
        let src = &bindings[&edge.from];
        let dst = &bindings[&edge.to];
        if src != dst && ctx.wireless_paths.contains(&(src.clone(), dst.clone())) {
            count += 1;
        }
    }
    count
}

/// Rank every configuration in the family: valid ones first, best to
/// worst, invalid ones after, by id.
pub fn rank(family: &ConfigurationFamily, ctx: &ContextSnapshot) -> Vec<RankedEntry> {
    let mut entries: Vec<RankedEntry> = Vec::new();
    for config in &family.configurations {
        let mut violations = check_validity(config, ctx);
        let mut energy = None;
        let mut wireless = None;
        if violations.is_empty() {
            match resolve_bindings(config, ctx) {
                Ok(bindings) => {
                    energy = Some(recompute_energy(config, &bindings, ctx));
                    wireless = Some(recompute_wireless(config, &bindings, ctx));
                }
                Err(obstacle) => violations.push(obstacle),
            }
        }
        entries.push(RankedEntry {
            config: config.id.clone(),
            qos_level: config.qos_level,
            valid: violations.is_empty(),
            violations,
            energy_rate: energy,
            wireless_conduits: wireless,
        });
    }
    entries.sort_by(compare_entries);
    entries
}

/// The configuration an exhaustive search would deploy.
pub fn best(family: &ConfigurationFamily, ctx: &ContextSnapshot) -> Option<ConfigId> {
    rank(family, ctx)
        .into_iter()
        .find(|e| e.valid)
        .map(|e| e.config)
}

fn compare_entries(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    match (a.valid, b.valid) {
        (true, false) => return Ordering::Less,
        (false, true) => return Ordering::Greater,
        (false, false) => return a.config.cmp(&b.config),
        (true, true) => {}
    }
    b.qos_level
        .cmp(&a.qos_level)
        .then_with(|| a.energy_rate.cmp(&b.energy_rate))
        .then_with(|| a.wireless_conduits.cmp(&b.wireless_conduits))
        .then_with(|| a.config.cmp(&b.config))
}

/// Human-readable ranking table, used by the `oracle` CLI command.
pub fn render(entries: &[RankedEntry]) -> String {
    let mut out = String::new();
    out.push_str("rank  config                     qos  energy  wireless  status\n");
    for (i, entry) in entries.iter().enumerate() {
        let status = if entry.valid {
            "valid".to_owned()
        } else {
            format!("invalid: {}", entry.violations.join("; "))
        };
        out.push_str(&format!(
            "{:>4}  {:<25}  {:>3}  {:>6}  {:>8}  {}\n",
            i + 1,
            entry.config,
            entry.qos_level,
            entry
                .energy_rate
                .map(|e| e.to_string())
                .unwrap_or_else(|| "-".into()),
            entry
                .wireless_conduits
                .map(|w| w.to_string())
                .unwrap_or_else(|| "-".into()),
            status
        ));
    }
    out
}
