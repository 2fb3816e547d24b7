//! Elementary processors: the container wrapping exactly one business
//! component, with input/output exchange units and a control unit.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{CmId, ConduitId, FlowId, HostId, PeId, PortId};
use crate::model::descriptor::{Body, BusinessComponentDescriptor, InteractionStyle, PortSpec};
use crate::model::frame::{derived_digest, source_digest, DataFrame};
use crate::world::{EnergyKind, World};

/// Lifecycle state shared by processors and conduits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentState {
    Created,
    Running,
    Stopped,
    Failed,
}

impl ComponentState {
    pub fn as_str(&self) -> &'static str {
        match self {
            ComponentState::Created => "created",
            ComponentState::Running => "running",
            ComponentState::Stopped => "stopped",
            ComponentState::Failed => "failed",
        }
    }
}

/// Where the control unit lives. On light hosts only a stub stays local;
/// the decision logic is deported to the correspondent host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlPlacement {
    Local,
    Split { stub_on: HostId, logic_on: HostId },
}

impl ControlPlacement {
    /// The host that receives supervision commands first.
    pub fn command_entry(&self, component_host: &HostId) -> HostId {
        match self {
            ControlPlacement::Local => component_host.clone(),
            ControlPlacement::Split { logic_on, .. } => logic_on.clone(),
        }
    }
}

/// One port instance. `flows` keeps the descriptor's declared order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub id: PortId,
    pub flows: Vec<FlowId>,
}

pub fn ports_from_specs(prefix: &str, specs: &[PortSpec]) -> Vec<Port> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| Port {
            id: PortId::new(format!("{prefix}{i}")),
            flows: spec.flows(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryProcessor {
    pub id: PeId,
    pub cm: CmId,
    pub host: HostId,
    pub state: ComponentState,
    pub adapter: InteractionStyle,
    pub control: ControlPlacement,
    pub in_ports: Vec<Port>,
    pub out_ports: Vec<Port>,
    /// Input unit: one bounded queue per input port.
    pub input_queues: BTreeMap<PortId, VecDeque<DataFrame>>,
    /// Output unit: staged frames awaiting pickup by conduits.
    pub staging: BTreeMap<PortId, VecDeque<DataFrame>>,
    /// Conduits attached per port.
    pub attached_in: BTreeMap<PortId, ConduitId>,
    pub attached_out: BTreeMap<PortId, ConduitId>,
    pub next_seq: BTreeMap<FlowId, u64>,
    /// Per-flow input counters for the downsampling body.
    pub downsample_counters: BTreeMap<FlowId, u64>,
    /// set_param key/value store, interpreted by the body where relevant.
    pub params: BTreeMap<String, String>,
    /// Metric windows exposed through state reports.
    pub processed_recent: u64,
    pub drops_recent: u64,
    /// True while the component has no reachable supervision.
    pub unsupervised: bool,
    /// Where each fragment of this processor was deployed.
    pub placement: Vec<(crate::platform::plan::FragmentKind, HostId)>,
    /// Route-usage registrations to undo when the processor goes away.
    pub in_use_pairs: Vec<(HostId, HostId)>,
}

impl ElementaryProcessor {
    pub fn staged_count(&self) -> u64 {
        self.staging.values().map(|q| q.len() as u64).sum()
    }

    pub fn queue_depths(&self) -> BTreeMap<PortId, usize> {
        let mut depths: BTreeMap<PortId, usize> = self
            .input_queues
            .iter()
            .map(|(p, q)| (p.clone(), q.len()))
            .collect();
        for (p, q) in &self.staging {
            depths.insert(p.clone(), q.len());
        }
        depths
    }

    pub fn in_port(&self, id: &PortId) -> Option<&Port> {
        self.in_ports.iter().find(|p| &p.id == id)
    }

    pub fn out_port(&self, id: &PortId) -> Option<&Port> {
        self.out_ports.iter().find(|p| &p.id == id)
    }

    /// Fail the processor and surrender every buffered frame (staging
    /// only; input frames were already delivered).
    pub fn fail(&mut self) -> Vec<DataFrame> {
        self.state = ComponentState::Failed;
        let mut lost = Vec::new();
        for q in self.staging.values_mut() {
            lost.extend(q.drain(..));
        }
        for q in self.input_queues.values_mut() {
            q.clear();
        }
        lost
    }

    /// Drain staged frames, e.g. when the processor is destroyed.
    pub fn drain_staging(&mut self) -> Vec<DataFrame> {
        let mut out = Vec::new();
        for q in self.staging.values_mut() {
            out.extend(q.drain(..));
        }
        out
    }
}

impl World {
    /// Instantiate a processor for a repository descriptor on a host.
    /// Capacity must have been charged by the caller (the container
    /// factory); this only validates and builds the runtime object.
    pub fn instantiate_pe(
        &mut self,
        id: PeId,
        cm: &CmId,
        host_id: &HostId,
        control: ControlPlacement,
    ) -> Result<&ElementaryProcessor> {
        let descriptor = self.visible_descriptor(cm, host_id)?.clone();
        let host = self.require_host(host_id)?;
        let local_needed: u64 = crate::platform::plan::local_pe_fragments(host.class)
            .iter()
            .map(|f| f.footprint(descriptor.memory_footprint, &self.params.footprints))
            .sum();
        if host.free_memory() < local_needed {
            return Err(Error::CapacityExceeded {
                host: host_id.clone(),
                needed: local_needed,
                free: host.free_memory(),
            });
        }
        if let Some(capability) = descriptor.required_capability() {
            if !host.sensing_capabilities.contains(capability) {
                return Err(Error::CapabilityMismatch {
                    host: host_id.clone(),
                    capability: capability.to_owned(),
                });
            }
        }
        if let ControlPlacement::Split { stub_on, logic_on } = &control {
            if stub_on != host_id {
                return Err(Error::InvalidValue(format!(
                    "split control stub must live on the component host `{host_id}`"
                )));
            }
            let logic_host = self.require_host(logic_on)?;
            if logic_host.class != crate::world::HostClass::Fixed {
                return Err(Error::InvalidValue(format!(
                    "control logic must be deported to a fixed host, `{logic_on}` is not"
                )));
            }
        }

        let in_ports = ports_from_specs("in", &descriptor.input_flows);
        let out_ports = ports_from_specs("out", &descriptor.output_flows);
        let pe = ElementaryProcessor {
            id: id.clone(),
            cm: cm.clone(),
            host: host_id.clone(),
            state: ComponentState::Created,
            adapter: descriptor.interaction_style,
            control,
            input_queues: in_ports
                .iter()
                .map(|p| (p.id.clone(), VecDeque::new()))
                .collect(),
            staging: out_ports
                .iter()
                .map(|p| (p.id.clone(), VecDeque::new()))
                .collect(),
            in_ports,
            out_ports,
            attached_in: BTreeMap::new(),
            attached_out: BTreeMap::new(),
            next_seq: BTreeMap::new(),
            downsample_counters: BTreeMap::new(),
            params: BTreeMap::new(),
            processed_recent: 0,
            drops_recent: 0,
            unsupervised: false,
            placement: Vec::new(),
            in_use_pairs: Vec::new(),
        };
        self.pes.insert(id.clone(), pe);
        Ok(self.pes.get(&id).unwrap())
    }

    /// The descriptor as visible from a host: the global repository for
    /// fixed and light hosts, the preloaded package for sensors.
    pub fn visible_descriptor(
        &self,
        cm: &CmId,
        host_id: &HostId,
    ) -> Result<&BusinessComponentDescriptor> {
        let host = self.require_host(host_id)?;
        if host.class == crate::world::HostClass::Sensor && !host.preloaded_repository.contains(cm)
        {
            return Err(Error::ClosedWorldViolation {
                host: host_id.clone(),
                cm: cm.clone(),
            });
        }
        self.repository
            .get(cm)
            .ok_or_else(|| Error::UnknownDescriptor(cm.clone()))
    }

    /// Run one processor for one tick. Returns the number of frames
    /// processed. Emission happens into the staging buffers; conduits
    /// pick them up in their own step.
    pub fn pe_step(&mut self, pe_id: &PeId) -> u64 {
        let Some(pe) = self.pes.get(pe_id) else {
            return 0;
        };
        if pe.state != ComponentState::Running {
            return 0;
        }
        let descriptor = match self.repository.get(&pe.cm) {
            Some(d) => d.clone(),
            None => return 0,
        };
        let host = pe.host.clone();
        let tick = self.clock.tick;
        let adapter = pe.adapter;
        let in_port_ids: Vec<PortId> = pe.in_ports.iter().map(|p| p.id.clone()).collect();

        let mut activations: u64 = 0;
        let mut emissions: Vec<DataFrame> = Vec::new();

        if in_port_ids.is_empty() {
            // Source component: one activation per tick while running.
            activations = 1;
            let pe = self.pes.get_mut(pe_id).unwrap();
            let seed = self.params.seed;
            let bytes = self.params.default_frame_bytes;
            emit_source_frames(pe, seed, bytes, tick, &mut emissions);
        } else {
            let budget_per_port = match adapter {
                InteractionStyle::Event => usize::MAX,
                InteractionStyle::MethodCall | InteractionStyle::Mailbox => 1,
            };
            let pe = self.pes.get_mut(pe_id).unwrap();
            let mut inputs: Vec<DataFrame> = Vec::new();
            for port in &in_port_ids {
                let queue = pe.input_queues.get_mut(port).unwrap();
                for _ in 0..budget_per_port.min(queue.len()) {
                    inputs.push(queue.pop_front().unwrap());
                }
            }
            for frame in inputs {
                activations += 1;
                apply_body(pe, &descriptor.body, &frame, tick, &mut emissions);
            }
        }

        if activations > 0 {
            self.charge_energy(&host, EnergyKind::Cpu, descriptor.cpu_cost * activations);
            let pe = self.pes.get_mut(pe_id).unwrap();
            pe.processed_recent = activations;
            stage_emissions(pe, emissions, &mut self.counters.emitted);
        } else {
            let pe = self.pes.get_mut(pe_id).unwrap();
            pe.processed_recent = 0;
        }
        activations
    }
}

/// Produce one frame per output flow from a source component.
fn emit_source_frames(
    pe: &mut ElementaryProcessor,
    seed: u64,
    bytes: u64,
    tick: u64,
    out: &mut Vec<DataFrame>,
) {
    let flows: Vec<FlowId> = pe
        .out_ports
        .iter()
        .flat_map(|p| p.flows.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for flow in flows {
        let seq = next_seq(pe, &flow);
        out.push(DataFrame {
            flow: flow.clone(),
            seq,
            producer: pe.id.clone(),
            payload_size: bytes,
            produced_tick: tick,
            payload_digest: source_digest(seed, &pe.id, &flow, seq),
        });
    }
}

/// Apply the simulated body to one input frame, emitting derived frames
/// on every output flow.
fn apply_body(
    pe: &mut ElementaryProcessor,
    body: &Body,
    input: &DataFrame,
    tick: u64,
    out: &mut Vec<DataFrame>,
) {
    let (emit, digest, size) = match body {
        Body::PassThrough => (true, input.payload_digest, input.payload_size),
        Body::Downsample { k } => {
            let counter = pe
                .downsample_counters
                .entry(input.flow.clone())
                .or_insert(0);
            *counter += 1;
            (
                counter.is_multiple_of(*k),
                input.payload_digest,
                input.payload_size,
            )
        }
        Body::DetectThreshold { modulus } => (
            input.payload_digest.is_multiple_of(*modulus),
            derived_digest(input.payload_digest),
            16,
        ),
    };
    if !emit {
        return;
    }
    let flows: Vec<FlowId> = pe
        .out_ports
        .iter()
        .flat_map(|p| p.flows.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for flow in flows {
        let seq = next_seq(pe, &flow);
        out.push(DataFrame {
            flow,
            seq,
            producer: pe.id.clone(),
            payload_size: size,
            produced_tick: tick,
            payload_digest: digest,
        });
    }
}

fn next_seq(pe: &mut ElementaryProcessor, flow: &FlowId) -> u64 {
    let counter = pe.next_seq.entry(flow.clone()).or_insert(0);
    *counter += 1;
    *counter
}

/// Copy each emitted frame into every output port carrying its flow.
fn stage_emissions(pe: &mut ElementaryProcessor, emissions: Vec<DataFrame>, emitted: &mut u64) {
    for frame in emissions {
        let ports: Vec<PortId> = pe
            .out_ports
            .iter()
            .filter(|p| p.flows.contains(&frame.flow))
            .map(|p| p.id.clone())
            .collect();
        for port in ports {
            pe.staging.get_mut(&port).unwrap().push_back(frame.clone());
            *emitted += 1;
        }
    }
}
