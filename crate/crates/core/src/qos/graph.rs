//! Designer-provided configuration graphs and families.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AppId, CmId, ConfigId, FlowId, HostId, NodeId};
use crate::model::conduit::TransportPolicy;
use crate::model::descriptor::BusinessComponentDescriptor;
use crate::world::HostClass;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostBinding {
    /// Pin to one concrete host.
    Host(HostId),
    /// Any host of the class; the platform picks a concrete one.
    Class(HostClass),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigNode {
    pub id: NodeId,
    pub cm: CmId,
    pub bind: HostBinding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConduitConstraint {
    Synchronized,
    Realtime,
}

/// Map transmission constraints onto exactly one transport policy.
pub fn policy_for(constraints: &BTreeSet<ConduitConstraint>) -> Result<TransportPolicy> {
    match (
        constraints.contains(&ConduitConstraint::Synchronized),
        constraints.contains(&ConduitConstraint::Realtime),
    ) {
        (false, false) => Ok(TransportPolicy::Fifo),
        (true, false) => Ok(TransportPolicy::Synchronized),
        (false, true) => Ok(TransportPolicy::RealtimeDrop),
        (true, true) => Err(Error::InvalidValue(
            "constraints {synchronized, realtime} map to no single transport policy".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEdge {
    pub from: NodeId,
    pub to: NodeId,
    /// Flow types carried; when empty in the scenario file the loader
    /// resolves them from the endpoint descriptors.
    #[serde(default)]
    pub flows: Vec<FlowId>,
    #[serde(default)]
    pub constraints: BTreeSet<ConduitConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationGraph {
    pub id: ConfigId,
    pub qos_level: u64,
    pub nodes: Vec<ConfigNode>,
    #[serde(default)]
    pub edges: Vec<ConfigEdge>,
}

impl ConfigurationGraph {
    pub fn node(&self, id: &NodeId) -> Option<&ConfigNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    /// The node feeding the application: the first declared node without
    /// incoming edges (falling back to the first node). Class-constrained
    /// nodes are bound as close to it as possible.
    pub fn data_source_node(&self) -> Option<&ConfigNode> {
        let targets: BTreeSet<&NodeId> = self.edges.iter().map(|e| &e.to).collect();
        self.nodes
            .iter()
            .find(|n| !targets.contains(&n.id))
            .or_else(|| self.nodes.first())
    }

    /// Structural validation against a repository: unique node ids,
    /// declared endpoints, flow-compatible edges, connectedness.
    pub fn validate(
        &self,
        lookup: &dyn Fn(&CmId) -> Option<BusinessComponentDescriptor>,
    ) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidValue(format!(
                "configuration `{}` has no nodes",
                self.id
            )));
        }
        let mut seen = BTreeSet::new();
        for node in &self.nodes {
            if !seen.insert(&node.id) {
                return Err(Error::InvalidValue(format!(
                    "configuration `{}` declares node `{}` twice",
                    self.id, node.id
                )));
            }
            if lookup(&node.cm).is_none() {
                return Err(Error::DanglingReference {
                    kind: "descriptor",
                    id: node.cm.to_string(),
                });
            }
        }
        for edge in &self.edges {
            if edge.from == edge.to {
                return Err(Error::InvalidValue(format!(
                    "configuration `{}`: edge `{}` -> `{}` is a self-loop",
                    self.id, edge.from, edge.to
                )));
            }
            let from = self
                .node(&edge.from)
                .ok_or_else(|| Error::DanglingReference {
                    kind: "node",
                    id: edge.from.to_string(),
                })?;
            let to = self
                .node(&edge.to)
                .ok_or_else(|| Error::DanglingReference {
                    kind: "node",
                    id: edge.to.to_string(),
                })?;
            let src = lookup(&from.cm).unwrap();
            let dst = lookup(&to.cm).unwrap();
            let flows: BTreeSet<FlowId> = edge.flows.iter().cloned().collect();
            let out_ok = src
                .output_flows
                .iter()
                .any(|p| p.flows().into_iter().collect::<BTreeSet<_>>() == flows);
            let in_ok = dst
                .input_flows
                .iter()
                .any(|p| p.flows().into_iter().collect::<BTreeSet<_>>() == flows);
            if !out_ok || !in_ok {
                return Err(Error::InvalidValue(format!(
                    "configuration `{}`: edge `{}` -> `{}` carries flows {:?} matching no port pair",
                    self.id, edge.from, edge.to, edge.flows
                )));
            }
            policy_for(&edge.constraints)?;
        }
        // Connectivity over the undirected application graph.
        if self.nodes.len() > 1 {
            let mut reached: BTreeSet<&NodeId> = BTreeSet::new();
            let mut stack = vec![&self.nodes[0].id];
            while let Some(node) = stack.pop() {
                if !reached.insert(node) {
                    continue;
                }
                for edge in &self.edges {
                    if &edge.from == node {
                        stack.push(&edge.to);
                    }
                    if &edge.to == node {
                        stack.push(&edge.from);
                    }
                }
            }
            if reached.len() != self.nodes.len() {
                return Err(Error::InvalidValue(format!(
                    "configuration `{}` is not connected",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationFamily {
    #[serde(rename = "application")]
    pub app: AppId,
    pub supervisor: HostId,
    pub configurations: Vec<ConfigurationGraph>,
}

impl ConfigurationFamily {
    pub fn configuration(&self, id: &ConfigId) -> Option<&ConfigurationGraph> {
        self.configurations.iter().find(|c| &c.id == id)
    }

    pub fn validate(
        &self,
        lookup: &dyn Fn(&CmId) -> Option<BusinessComponentDescriptor>,
    ) -> Result<()> {
        if self.configurations.is_empty() {
            return Err(Error::InvalidValue(format!(
                "family for `{}` declares no configurations",
                self.app
            )));
        }
        let mut ids = BTreeSet::new();
        for config in &self.configurations {
            if !ids.insert(&config.id) {
                return Err(Error::InvalidValue(format!(
                    "family for `{}` declares configuration `{}` twice",
                    self.app, config.id
                )));
            }
            config.validate(lookup)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::descriptor::InteractionStyle;
    use crate::testutil::descriptor_with;

    fn lookup(cm: &CmId) -> Option<BusinessComponentDescriptor> {
        match cm.as_str() {
            "cam" => Some(descriptor_with(
                "cam",
                InteractionStyle::Event,
                &[],
                &["video"],
            )),
            "ana" => Some(descriptor_with(
                "ana",
                InteractionStyle::Event,
                &["video"],
                &[],
            )),
            _ => None,
        }
    }

    fn two_node_config() -> ConfigurationGraph {
        ConfigurationGraph {
            id: "cfg".into(),
            qos_level: 1,
            nodes: vec![
                ConfigNode {
                    id: "c".into(),
                    cm: "cam".into(),
                    bind: HostBinding::Class(HostClass::Sensor),
                },
                ConfigNode {
                    id: "a".into(),
                    cm: "ana".into(),
                    bind: HostBinding::Host("F1".into()),
                },
            ],
            edges: vec![ConfigEdge {
                from: "c".into(),
                to: "a".into(),
                flows: vec!["video".into()],
                constraints: BTreeSet::new(),
            }],
        }
    }

    #[test]
    fn well_formed_config_validates() {
        assert!(two_node_config().validate(&lookup).is_ok());
    }

    #[test]
    fn incompatible_edge_flows_are_rejected() {
        let mut config = two_node_config();
        config.edges[0].flows = vec!["audio".into()];
        assert!(config.validate(&lookup).is_err());
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let mut config = two_node_config();
        config.edges.clear();
        assert!(matches!(
            config.validate(&lookup),
            Err(Error::InvalidValue(_))
        ));
    }

    #[test]
    fn constraint_mapping_is_exclusive() {
        assert_eq!(policy_for(&BTreeSet::new()).unwrap(), TransportPolicy::Fifo);
        let sync: BTreeSet<_> = [ConduitConstraint::Synchronized].into();
        assert_eq!(policy_for(&sync).unwrap(), TransportPolicy::Synchronized);
        let rt: BTreeSet<_> = [ConduitConstraint::Realtime].into();
        assert_eq!(policy_for(&rt).unwrap(), TransportPolicy::RealtimeDrop);
        let both: BTreeSet<_> =
            [ConduitConstraint::Synchronized, ConduitConstraint::Realtime].into();
        assert!(policy_for(&both).is_err());
    }

    #[test]
    fn data_source_node_is_first_without_incoming_edges() {
        let config = two_node_config();
        assert_eq!(config.data_source_node().unwrap().id, NodeId::from("c"));
    }
}
