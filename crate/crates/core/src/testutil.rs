//! Shared helpers for unit tests: tiny worlds, descriptors and frames.

use std::collections::BTreeSet;

use crate::ids::{ConduitId, FlowId, PeId};
use crate::model::conduit::TransportPolicy;
use crate::model::control::{StateReport, SubjectId};
use crate::model::descriptor::{
    Body, BusinessComponentDescriptor, Category, InteractionStyle, PortSpec,
};
use crate::model::frame::DataFrame;
use crate::model::pe::ControlPlacement;
use crate::params::SimParams;
use crate::platform::message::PlatformMessage;
use crate::world::{Host, HostClass, World};

pub fn mk_host(id: &str, class: HostClass, position: (f64, f64), radio: Option<f64>) -> Host {
    Host {
        id: id.into(),
        class,
        position,
        radio_range: radio,
        memory_capacity: if class == HostClass::Fixed {
            1_000_000
        } else {
            1000
        },
        memory_used: 0,
        battery_granted: 1_000_000,
        initial_battery: 1_000_000,
        ledger: Default::default(),
        sensing_capabilities: BTreeSet::new(),
        preloaded_repository: BTreeSet::new(),
        alive: true,
    }
}

/// (id, class, position, radio range) rows for `simple_world`.
pub type HostRow<'a> = (&'a str, HostClass, (f64, f64), Option<f64>);

/// A world of radio hosts at explicit positions.
pub fn simple_world(hosts: &[HostRow]) -> World {
    let mut world = World::new(SimParams::default());
    for (id, class, position, radio) in hosts {
        world
            .hosts
            .insert((*id).into(), mk_host(id, *class, *position, *radio));
        world.routing.insert((*id).into(), Default::default());
    }
    world
}

/// Hosts on a line, each within radio reach of its neighbors only.
pub fn line_world(hosts: &[(&str, HostClass)]) -> World {
    let specs: Vec<HostRow> = hosts
        .iter()
        .enumerate()
        .map(|(i, (id, class))| (*id, *class, (10.0 * i as f64, 0.0), Some(10.0)))
        .collect();
    simple_world(&specs)
}

pub fn descriptor_with(
    id: &str,
    style: InteractionStyle,
    inputs: &[&str],
    outputs: &[&str],
) -> BusinessComponentDescriptor {
    BusinessComponentDescriptor {
        id: id.into(),
        interaction_style: style,
        input_flows: inputs
            .iter()
            .map(|f| PortSpec::Single((*f).into()))
            .collect(),
        output_flows: outputs
            .iter()
            .map(|f| PortSpec::Single((*f).into()))
            .collect(),
        memory_footprint: 4,
        cpu_cost: 1,
        category: Category::Software,
        body: Body::PassThrough,
    }
}

/// One light host carrying one processor built from a fresh descriptor
/// named "cm".
pub fn world_with_pe(style: InteractionStyle, inputs: &[&str], outputs: &[&str]) -> (World, PeId) {
    let mut world = simple_world(&[("L1", HostClass::Light, (0.0, 0.0), Some(10.0))]);
    let descriptor = descriptor_with("cm", style, inputs, outputs);
    world.repository.insert(descriptor.id.clone(), descriptor);
    let pe_id: PeId = "pe:cm@L1".into();
    world
        .instantiate_pe(
            pe_id.clone(),
            &"cm".into(),
            &"L1".into(),
            ControlPlacement::Local,
        )
        .unwrap();
    (world, pe_id)
}

/// Two processors on one host joined by a running conduit carrying the
/// given flows.
pub fn connected_pair(policy: TransportPolicy, flows: &[&str]) -> (World, PeId, PeId, ConduitId) {
    let mut world = simple_world(&[("H1", HostClass::Light, (0.0, 0.0), Some(10.0))]);
    let port: Vec<FlowId> = flows.iter().map(|f| FlowId::from(*f)).collect();
    let spec = if port.len() == 1 {
        PortSpec::Single(port[0].clone())
    } else {
        PortSpec::Multi(port.clone())
    };
    let src = BusinessComponentDescriptor {
        id: "src".into(),
        interaction_style: InteractionStyle::Event,
        input_flows: vec![],
        output_flows: vec![spec.clone()],
        memory_footprint: 2,
        cpu_cost: 1,
        category: Category::Software,
        body: Body::PassThrough,
    };
    let dst = BusinessComponentDescriptor {
        id: "dst".into(),
        interaction_style: InteractionStyle::Event,
        input_flows: vec![spec],
        output_flows: vec![],
        memory_footprint: 2,
        cpu_cost: 1,
        category: Category::Software,
        body: Body::PassThrough,
    };
    world.repository.insert(src.id.clone(), src);
    world.repository.insert(dst.id.clone(), dst);
    let src_pe: PeId = "pe:src@H1".into();
    let dst_pe: PeId = "pe:dst@H1".into();
    world
        .instantiate_pe(
            src_pe.clone(),
            &"src".into(),
            &"H1".into(),
            ControlPlacement::Local,
        )
        .unwrap();
    world
        .instantiate_pe(
            dst_pe.clone(),
            &"dst".into(),
            &"H1".into(),
            ControlPlacement::Local,
        )
        .unwrap();
    let conduit_id: ConduitId = "cd:test".into();
    world
        .connect(
            conduit_id.clone(),
            &src_pe,
            &"out0".into(),
            &dst_pe,
            &"in0".into(),
            port,
            policy,
            ControlPlacement::Local,
        )
        .unwrap();
    world.conduits.get_mut(&conduit_id).unwrap().state = crate::model::pe::ComponentState::Running;
    (world, src_pe, dst_pe, conduit_id)
}

pub fn frame(flow: &str, seq: u64) -> DataFrame {
    frame_sized(flow, seq, 100)
}

pub fn frame_sized(flow: &str, seq: u64, bytes: u64) -> DataFrame {
    DataFrame {
        flow: flow.into(),
        seq,
        producer: "pe:test".into(),
        payload_size: bytes,
        produced_tick: 0,
        payload_digest: seq.wrapping_mul(0x9e3779b97f4a7c15),
    }
}

/// Push a frame straight into the port queue carrying its flow.
pub fn push_input(world: &mut World, pe_id: &PeId, flow: &str, seq: u64) {
    let pe = world.pes.get_mut(pe_id).unwrap();
    let port = pe
        .in_ports
        .iter()
        .find(|p| p.flows.contains(&FlowId::from(flow)))
        .map(|p| p.id.clone())
        .expect("no port for flow");
    pe.input_queues
        .get_mut(&port)
        .unwrap()
        .push_back(frame(flow, seq));
}

/// An arbitrary platform message for transport-level tests.
pub fn report_message() -> PlatformMessage {
    PlatformMessage::StateReport {
        report: StateReport {
            source: SubjectId::Pe("pe:test".into()),
            state: crate::model::pe::ComponentState::Created,
            queue_depths: Default::default(),
            processed_recent: 0,
            drops_recent: 0,
            blocked: false,
        },
        ack: None,
        error: None,
    }
}
