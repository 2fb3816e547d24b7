//! Business component descriptors: the functional units the repository
//! offers for deployment.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{CmId, FlowId};

/// How a component exchanges data with its container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionStyle {
    /// Every queued frame is pushed through on arrival ticks.
    Event,
    /// The component pulls at most one frame per input port per tick.
    MethodCall,
    /// Like `method_call`, but the inbound queue is bounded and overflow
    /// rejects the newcomer.
    Mailbox,
}

/// Whether the component is pure software or bound to a sensing capability
/// that only certain hosts offer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Software,
    Sensing { capability: String },
}

/// The simulated component body. Real processing is out of scope; these
/// deterministic transforms keep end-to-end payload digests checkable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Body {
    /// Repeat every input frame on the output flows, digest unchanged.
    #[default]
    PassThrough,
    /// Forward every k-th input frame per flow.
    Downsample { k: u64 },
    /// Emit a small event frame whenever the input digest clears the
    /// threshold test.
    DetectThreshold { modulus: u64 },
}

/// One port as declared by a descriptor: a slot that carries a fixed set
/// of flow types. Most ports carry a single flow; multi-flow ports exist
/// so one conduit can transport related flows together (and synchronize
/// them).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PortSpec {
    Single(FlowId),
    Multi(Vec<FlowId>),
}

impl PortSpec {
    pub fn flows(&self) -> Vec<FlowId> {
        match self {
            PortSpec::Single(f) => vec![f.clone()],
            PortSpec::Multi(fs) => fs.clone(),
        }
    }
}

/// A business component as stored in the repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusinessComponentDescriptor {
    pub id: CmId,
    #[serde(rename = "style")]
    pub interaction_style: InteractionStyle,
    #[serde(rename = "inputs")]
    pub input_flows: Vec<PortSpec>,
    #[serde(rename = "outputs")]
    pub output_flows: Vec<PortSpec>,
    /// Abstract memory units occupied by the component body.
    #[serde(rename = "memory")]
    pub memory_footprint: u64,
    /// Energy units charged per activation.
    #[serde(rename = "cpu")]
    pub cpu_cost: u64,
    pub category: Category,
    #[serde(default)]
    pub body: Body,
}

impl BusinessComponentDescriptor {
    pub fn is_sensing(&self) -> bool {
        matches!(self.category, Category::Sensing { .. })
    }

    pub fn required_capability(&self) -> Option<&str> {
        match &self.category {
            Category::Software => None,
            Category::Sensing { capability } => Some(capability),
        }
    }

    /// Flow types of all output ports, flattened.
    pub fn output_flow_set(&self) -> BTreeSet<FlowId> {
        self.output_flows.iter().flat_map(|p| p.flows()).collect()
    }

    pub fn input_flow_set(&self) -> BTreeSet<FlowId> {
        self.input_flows.iter().flat_map(|p| p.flows()).collect()
    }

    /// Basic well-formedness: positive footprint, sensing components
    /// produce something, downsample factors are usable.
    pub fn validate(&self) -> Result<()> {
        if self.memory_footprint == 0 {
            return Err(Error::InvalidValue(format!(
                "descriptor `{}` must have memory_footprint > 0",
                self.id
            )));
        }
        if self.is_sensing() && self.output_flows.is_empty() {
            return Err(Error::InvalidValue(format!(
                "sensing descriptor `{}` must declare at least one output flow",
                self.id
            )));
        }
        match self.body {
            Body::Downsample { k: 0 } => {
                return Err(Error::InvalidValue(format!(
                    "descriptor `{}`: downsample factor must be >= 1",
                    self.id
                )));
            }
            Body::DetectThreshold { modulus: 0 } => {
                return Err(Error::InvalidValue(format!(
                    "descriptor `{}`: detect threshold modulus must be >= 1",
                    self.id
                )));
            }
            _ => {}
        }
        for port in self.input_flows.iter().chain(self.output_flows.iter()) {
            if port.flows().is_empty() {
                return Err(Error::InvalidValue(format!(
                    "descriptor `{}` declares an empty port",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensing(id: &str) -> BusinessComponentDescriptor {
        BusinessComponentDescriptor {
            id: id.into(),
            interaction_style: InteractionStyle::Event,
            input_flows: vec![],
            output_flows: vec![PortSpec::Single("detect".into())],
            memory_footprint: 4,
            cpu_cost: 2,
            category: Category::Sensing {
                capability: "infrared".into(),
            },
            body: Body::PassThrough,
        }
    }

    #[test]
    fn sensing_descriptor_requires_output() {
        let mut d = sensing("ir-detect");
        assert!(d.validate().is_ok());
        d.output_flows.clear();
        assert!(matches!(d.validate(), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn zero_footprint_rejected() {
        let mut d = sensing("ir-detect");
        d.memory_footprint = 0;
        assert!(d.validate().is_err());
    }

    #[test]
    fn port_spec_accepts_single_and_grouped_flows() {
        let d: BusinessComponentDescriptor = serde_json::from_str(
            r#"{"id":"mux","style":"event","inputs":[["audio","video"]],
                "outputs":["av"],"memory":2,"cpu":1,"category":"software"}"#,
        )
        .unwrap();
        assert_eq!(d.input_flows[0].flows().len(), 2);
        assert_eq!(d.output_flows[0].flows(), vec![FlowId::from("av")]);
    }
}
