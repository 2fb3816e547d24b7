//! Configuration diffing: turn "we run A, we want B" into the ordered
//! destroy/create script the factories execute. Components are keyed by
//! (component, bound host) and conduits by (source key, target key,
//! policy, flows), so anything unchanged is left untouched.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::ids::{CmId, ConduitId, ConfigId, FlowId, HostId, PeId};
use crate::model::conduit::TransportPolicy;
use crate::qos::graph::{policy_for, ConfigurationGraph};
use crate::qos::select::Bindings;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeKey {
    pub cm: CmId,
    pub host: HostId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeKey {
    pub source: NodeKey,
    pub target: NodeKey,
    pub policy: TransportPolicy,
    pub flows: Vec<FlowId>,
}

/// Live instances of a deployment, keyed by their bound identity.
pub type DeployedNodes = BTreeMap<NodeKey, PeId>;
pub type DeployedEdges = BTreeMap<EdgeKey, ConduitId>;

pub fn pe_instance_id(key: &NodeKey) -> PeId {
    PeId::new(format!("pe:{}@{}", key.cm, key.host))
}

pub fn conduit_instance_id(key: &EdgeKey) -> ConduitId {
    ConduitId::new(format!(
        "cd:{}@{}->{}@{}:{}",
        key.source.cm,
        key.source.host,
        key.target.cm,
        key.target.host,
        key.policy.as_str()
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedContainer {
    pub pe: PeId,
    pub key: NodeKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedConduit {
    pub conduit: ConduitId,
    pub key: EdgeKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconfigurationScript {
    pub config: ConfigId,
    pub bindings: Bindings,
    pub destroy_conduits: Vec<ConduitId>,
    pub destroy_containers: Vec<PeId>,
    pub create_containers: Vec<PlannedContainer>,
    pub create_conduits: Vec<PlannedConduit>,
}

impl ReconfigurationScript {
    pub fn is_empty(&self) -> bool {
        self.destroy_conduits.is_empty()
            && self.destroy_containers.is_empty()
            && self.create_containers.is_empty()
            && self.create_conduits.is_empty()
    }
}

/// The bound node and edge key sets of a configuration.
pub fn bound_sets(
    config: &ConfigurationGraph,
    bindings: &Bindings,
) -> Result<(BTreeSet<NodeKey>, BTreeSet<EdgeKey>)> {
    let mut nodes = BTreeSet::new();
    let mut node_keys: BTreeMap<&crate::ids::NodeId, NodeKey> = BTreeMap::new();
    for node in &config.nodes {
        let host = bindings
            .get(&node.id)
            .ok_or_else(|| Error::UnboundNode(node.id.clone()))?;
        let key = NodeKey {
            cm: node.cm.clone(),
            host: host.clone(),
        };
        node_keys.insert(&node.id, key.clone());
        nodes.insert(key);
    }
    let mut edges = BTreeSet::new();
    for edge in &config.edges {
        let source = node_keys
            .get(&edge.from)
            .ok_or_else(|| Error::UnboundNode(edge.from.clone()))?;
        let target = node_keys
            .get(&edge.to)
            .ok_or_else(|| Error::UnboundNode(edge.to.clone()))?;
        edges.insert(EdgeKey {
            source: source.clone(),
            target: target.clone(),
            policy: policy_for(&edge.constraints)?,
            flows: edge.flows.clone(),
        });
    }
    Ok((nodes, edges))
}

/// Compute the script transforming the current deployment into `next`.
/// `current` is what is actually deployed: node and edge keys with their
/// live instance ids.
pub fn diff_config(
    current: Option<(&DeployedNodes, &DeployedEdges)>,
    next: &ConfigurationGraph,
    bindings: &Bindings,
) -> Result<ReconfigurationScript> {
    let (next_nodes, next_edges) = bound_sets(next, bindings)?;
    let empty_nodes = DeployedNodes::new();
    let empty_edges = DeployedEdges::new();
    let (current_nodes, current_edges) = match current {
        Some((nodes, edges)) => (nodes, edges),
        None => (&empty_nodes, &empty_edges),
    };

    let destroy_conduits: Vec<ConduitId> = current_edges
        .iter()
        .filter(|(key, _)| !next_edges.contains(key))
        .map(|(_, id)| id.clone())
        .collect();
    let destroy_containers: Vec<PeId> = current_nodes
        .iter()
        .filter(|(key, _)| !next_nodes.contains(key))
        .map(|(_, id)| id.clone())
        .collect();
    let create_containers: Vec<PlannedContainer> = next_nodes
        .iter()
        .filter(|key| !current_nodes.contains_key(key))
        .map(|key| PlannedContainer {
            pe: pe_instance_id(key),
            key: key.clone(),
        })
        .collect();
    let create_conduits: Vec<PlannedConduit> = next_edges
        .iter()
        .filter(|key| !current_edges.contains_key(key))
        .map(|key| PlannedConduit {
            conduit: conduit_instance_id(key),
            key: key.clone(),
        })
        .collect();

    Ok(ReconfigurationScript {
        config: next.id.clone(),
        bindings: bindings.clone(),
        destroy_conduits,
        destroy_containers,
        create_containers,
        create_conduits,
    })
}
