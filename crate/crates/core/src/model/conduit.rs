//! Conduits: the connector entities transporting flows between processor
//! ports, each with its own control unit and transport policy.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ConduitId, FlowId, HostId, PeId, PortId};
use crate::log::LogKind;
use crate::model::frame::DataFrame;
use crate::model::pe::{ComponentState, ControlPlacement};
use crate::transport::MessageBody;
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportPolicy {
    /// Deliver in arrival order.
    Fifo,
    /// Release only complete equal-seq groups covering every flow.
    Synchronized,
    /// Deliver only the newest frame per flow, dropping stale ones.
    RealtimeDrop,
}

impl TransportPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransportPolicy::Fifo => "fifo",
            TransportPolicy::Synchronized => "synchronized",
            TransportPolicy::RealtimeDrop => "realtime_drop",
        }
    }
}

/// A frame waiting at the target side, tagged with its arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferedFrame {
    pub arrival: u64,
    pub frame: DataFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conduit {
    pub id: ConduitId,
    pub source: (PeId, PortId),
    pub target: (PeId, PortId),
    pub source_host: HostId,
    pub target_host: HostId,
    pub flows: Vec<FlowId>,
    pub policy: TransportPolicy,
    pub state: ComponentState,
    pub control: ControlPlacement,
    /// Target-side buffer ordered by arrival; per-flow views are derived.
    pub buffer: VecDeque<BufferedFrame>,
    next_arrival: u64,
    pub delivered_total: u64,
    pub drops_total: u64,
    pub drops_recent: u64,
    /// True while the endpoint hosts cannot reach each other.
    pub blocked: bool,
    /// Where each fragment of this conduit was deployed.
    pub placement: Vec<(crate::platform::plan::FragmentKind, HostId)>,
    /// Route-usage registrations to undo when the conduit goes away.
    pub in_use_pairs: Vec<(HostId, HostId)>,
}

impl Conduit {
    pub fn buffered_count(&self) -> u64 {
        self.buffer.len() as u64
    }

    pub fn buffer_depth_per_flow(&self) -> BTreeMap<FlowId, usize> {
        let mut depths: BTreeMap<FlowId, usize> =
            self.flows.iter().map(|f| (f.clone(), 0)).collect();
        for buffered in &self.buffer {
            *depths.entry(buffered.frame.flow.clone()).or_insert(0) += 1;
        }
        depths
    }

    pub fn accept(&mut self, frame: DataFrame) {
        let arrival = self.next_arrival;
        self.next_arrival += 1;
        self.buffer.push_back(BufferedFrame { arrival, frame });
    }

    pub fn fail(&mut self) -> Vec<DataFrame> {
        self.state = ComponentState::Failed;
        self.buffer.drain(..).map(|b| b.frame).collect()
    }

    pub fn drain_buffer(&mut self) -> Vec<DataFrame> {
        self.buffer.drain(..).map(|b| b.frame).collect()
    }
}

impl World {
    /// Attach a conduit between a processor output port and a processor
    /// input port. Both port flow sets must match the conduit's flow
    /// list exactly, and a port carries at most one conduit.
    #[allow(clippy::too_many_arguments)]
    pub fn connect(
        &mut self,
        id: ConduitId,
        source_pe: &PeId,
        out_port: &PortId,
        target_pe: &PeId,
        in_port: &PortId,
        flows: Vec<FlowId>,
        policy: TransportPolicy,
        control: ControlPlacement,
    ) -> Result<&Conduit> {
        if flows.is_empty() {
            return Err(Error::InvalidValue(format!(
                "conduit `{id}` must carry at least one flow"
            )));
        }
        let flow_set: BTreeSet<&FlowId> = flows.iter().collect();

        let source = self.pes.get(source_pe).ok_or_else(|| {
            Error::DanglingEndpoint(format!("source processor `{source_pe}` does not exist"))
        })?;
        let target = self.pes.get(target_pe).ok_or_else(|| {
            Error::DanglingEndpoint(format!("target processor `{target_pe}` does not exist"))
        })?;

        let src_port = source.out_port(out_port).ok_or_else(|| {
            Error::UnknownEndpoint(format!("`{source_pe}` has no output port `{out_port}`"))
        })?;
        let dst_port = target.in_port(in_port).ok_or_else(|| {
            Error::UnknownEndpoint(format!("`{target_pe}` has no input port `{in_port}`"))
        })?;

        if src_port.flows.iter().collect::<BTreeSet<_>>() != flow_set {
            return Err(Error::FlowTypeMismatch {
                pe: source_pe.clone(),
                port: out_port.clone(),
            });
        }
        if dst_port.flows.iter().collect::<BTreeSet<_>>() != flow_set {
            return Err(Error::FlowTypeMismatch {
                pe: target_pe.clone(),
                port: in_port.clone(),
            });
        }
        if let Some(existing) = source.attached_out.get(out_port) {
            return Err(Error::PortBusy {
                pe: source_pe.clone(),
                port: out_port.clone(),
                conduit: existing.clone(),
            });
        }
        if let Some(existing) = target.attached_in.get(in_port) {
            return Err(Error::PortBusy {
                pe: target_pe.clone(),
                port: in_port.clone(),
                conduit: existing.clone(),
            });
        }

        let source_host = source.host.clone();
        let target_host = target.host.clone();
        let conduit = Conduit {
            id: id.clone(),
            source: (source_pe.clone(), out_port.clone()),
            target: (target_pe.clone(), in_port.clone()),
            source_host,
            target_host,
            flows,
            policy,
            state: ComponentState::Created,
            control,
            buffer: VecDeque::new(),
            next_arrival: 0,
            delivered_total: 0,
            drops_total: 0,
            drops_recent: 0,
            blocked: false,
            placement: Vec::new(),
            in_use_pairs: Vec::new(),
        };
        self.pes
            .get_mut(source_pe)
            .unwrap()
            .attached_out
            .insert(out_port.clone(), id.clone());
        self.pes
            .get_mut(target_pe)
            .unwrap()
            .attached_in
            .insert(in_port.clone(), id.clone());
        self.conduits.insert(id.clone(), conduit);
        Ok(self.conduits.get(&id).unwrap())
    }

    /// Detach and remove a conduit; in-flight and buffered frames are
    /// dropped and counted by the caller via the returned list.
    pub fn disconnect(&mut self, id: &ConduitId) -> Result<Vec<DataFrame>> {
        let conduit = self
            .conduits
            .remove(id)
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))?;
        if let Some(pe) = self.pes.get_mut(&conduit.source.0) {
            pe.attached_out.remove(&conduit.source.1);
        }
        if let Some(pe) = self.pes.get_mut(&conduit.target.0) {
            pe.attached_in.remove(&conduit.target.1);
        }
        let mut lost: Vec<DataFrame> = conduit.buffer.into_iter().map(|b| b.frame).collect();
        lost.extend(self.purge_transit_for_conduit(id));
        // Frames still staged at the source port lose their carrier too.
        if let Some(pe) = self.pes.get_mut(&conduit.source.0) {
            if let Some(queue) = pe.staging.get_mut(&conduit.source.1) {
                lost.extend(queue.drain(..));
            }
        }
        Ok(lost)
    }

    /// Run one conduit for one tick: pick staged frames up at the source,
    /// ship them (one hop of latency per inter-host hop), then release
    /// buffered frames to the target according to the policy.
    pub fn conduit_step(&mut self, id: &ConduitId) {
        let Some(conduit) = self.conduits.get(id) else {
            return;
        };
        if conduit.state != ComponentState::Running {
            return;
        }
        let (source_pe, source_port) = conduit.source.clone();
        let source_host = conduit.source_host.clone();
        let target_host = conduit.target_host.clone();
        let policy = conduit.policy;

        self.conduits.get_mut(id).unwrap().drops_recent = 0;

        // Pickup. Local endpoints transfer immediately; remote endpoints
        // need a live route, otherwise the conduit blocks and holds.
        let staged: Vec<DataFrame> = match self.pes.get_mut(&source_pe) {
            Some(pe) => match pe.staging.get_mut(&source_port) {
                Some(queue) => queue.drain(..).collect(),
                None => Vec::new(),
            },
            None => Vec::new(),
        };
        if source_host == target_host {
            let conduit = self.conduits.get_mut(id).unwrap();
            conduit.blocked = false;
            for frame in staged {
                conduit.accept(frame);
            }
        } else if !staged.is_empty() {
            let routable = self
                .routing
                .get(&source_host)
                .map(|r| r.table.contains_key(&target_host))
                .unwrap_or(false);
            if routable {
                self.conduits.get_mut(id).unwrap().blocked = false;
                for frame in staged {
                    let body = MessageBody::Data {
                        conduit: id.clone(),
                        frame,
                    };
                    // Route re-checked per hop inside the transport.
                    let _ = self.send_body(
                        &source_host,
                        &target_host,
                        crate::transport::Priority::Normal,
                        body,
                    );
                }
            } else {
                // Hold: push frames back into staging, report blocked.
                let pe = self.pes.get_mut(&source_pe).unwrap();
                let queue = pe.staging.get_mut(&source_port).unwrap();
                for frame in staged.into_iter().rev() {
                    queue.push_front(frame);
                }
                self.conduits.get_mut(id).unwrap().blocked = true;
            }
        }

        // Release.
        let (deliveries, drops) = {
            let conduit = self.conduits.get_mut(id).unwrap();
            match policy {
                TransportPolicy::Fifo => (
                    conduit
                        .buffer
                        .drain(..)
                        .map(|b| b.frame)
                        .collect::<Vec<_>>(),
                    Vec::new(),
                ),
                TransportPolicy::Synchronized => release_synchronized(conduit),
                TransportPolicy::RealtimeDrop => release_realtime(conduit),
            }
        };
        if !drops.is_empty() {
            let conduit = self.conduits.get_mut(id).unwrap();
            conduit.drops_total += drops.len() as u64;
            conduit.drops_recent += drops.len() as u64;
            self.drop_frames(drops, "realtime_drop");
        }
        for frame in deliveries {
            self.deliver_to_target(id, frame);
        }
    }

    /// Hand one frame to the target processor's input unit, honoring the
    /// mailbox bound.
    fn deliver_to_target(&mut self, conduit_id: &ConduitId, frame: DataFrame) {
        let conduit = self.conduits.get(conduit_id).unwrap();
        let (target_pe, target_port) = conduit.target.clone();
        let target_host = conduit.target_host.clone();
        let mailbox_capacity = self.params.mailbox_capacity;

        let Some(pe) = self.pes.get_mut(&target_pe) else {
            self.drop_frames(vec![frame], "missing_target");
            return;
        };
        let mailbox_full = pe.adapter == crate::model::descriptor::InteractionStyle::Mailbox
            && pe
                .input_queues
                .get(&target_port)
                .map(|q| q.len())
                .unwrap_or(0)
                >= mailbox_capacity;
        if mailbox_full {
            pe.drops_recent += 1;
            let details = vec![
                ("pe", target_pe.to_string()),
                ("port", target_port.to_string()),
                ("flow", frame.flow.to_string()),
                ("seq", frame.seq.to_string()),
                ("capacity", mailbox_capacity.to_string()),
            ];
            self.counters.dropped += 1;
            self.log(LogKind::Backpressure, &target_host.clone(), details);
            return;
        }
        pe.input_queues
            .get_mut(&target_port)
            .unwrap()
            .push_back(frame.clone());
        self.counters.delivered += 1;
        self.conduits.get_mut(conduit_id).unwrap().delivered_total += 1;
        self.log(
            LogKind::FrameDelivered,
            &target_host,
            vec![
                ("conduit", conduit_id.to_string()),
                ("pe", target_pe.to_string()),
                ("flow", frame.flow.to_string()),
                ("seq", frame.seq.to_string()),
                ("producer", frame.producer.to_string()),
                ("digest", format!("{:016x}", frame.payload_digest)),
            ],
        );
    }
}

/// Release complete equal-seq groups in ascending seq order.
fn release_synchronized(conduit: &mut Conduit) -> (Vec<DataFrame>, Vec<DataFrame>) {
    let flow_count = conduit.flows.iter().collect::<BTreeSet<_>>().len();
    let mut by_seq: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (idx, buffered) in conduit.buffer.iter().enumerate() {
        by_seq.entry(buffered.frame.seq).or_default().push(idx);
    }
    let mut release_indices: Vec<usize> = Vec::new();
    for (_, indices) in by_seq {
        let flows: BTreeSet<&FlowId> = indices
            .iter()
            .map(|i| &conduit.buffer[*i].frame.flow)
            .collect();
        if flows.len() == flow_count {
            // One frame per flow; if duplicates arrived keep the first.
            let mut seen: BTreeSet<FlowId> = BTreeSet::new();
            for idx in indices {
                let flow = conduit.buffer[idx].frame.flow.clone();
                if seen.insert(flow) {
                    release_indices.push(idx);
                }
            }
        }
    }
    release_indices.sort_unstable();
    let mut released = Vec::new();
    for idx in release_indices.iter().rev() {
        released.push(conduit.buffer.remove(*idx).unwrap().frame);
    }
    released.reverse();
    // Deliver groups in seq order, flows in conduit declaration order.
    released.sort_by_key(|f| (f.seq, conduit.flows.iter().position(|fl| fl == &f.flow)));
    (released, Vec::new())
}

/// Keep only the newest frame per flow; everything older is dropped.
fn release_realtime(conduit: &mut Conduit) -> (Vec<DataFrame>, Vec<DataFrame>) {
    let mut newest: BTreeMap<FlowId, (u64, u64)> = BTreeMap::new(); // flow -> (seq, arrival)
    for buffered in &conduit.buffer {
        let entry = newest
            .entry(buffered.frame.flow.clone())
            .or_insert((buffered.frame.seq, buffered.arrival));
        if buffered.frame.seq > entry.0 {
            *entry = (buffered.frame.seq, buffered.arrival);
        }
    }
    let mut released = Vec::new();
    let mut dropped = Vec::new();
    for buffered in conduit.buffer.drain(..) {
        let keep = newest
            .get(&buffered.frame.flow)
            .map(|(_, arrival)| *arrival == buffered.arrival)
            .unwrap_or(false);
        if keep {
            released.push(buffered.frame);
        } else {
            dropped.push(buffered.frame);
        }
    }
    (released, dropped)
}
