//! Deployment planning: which fragment of a component lands on which
//! host, depending on the host's class.
//!
//! Fixed hosts take everything. Light hosts keep only what data exchange
//! strictly needs (the component, both exchange units and a control
//! stub) while the control logic is deported to the correspondent host.
//! Sensor hosts are closed worlds: everything stays local and only
//! preloaded components may be instantiated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{CmId, ConduitId, HostId, PeId};
use crate::model::control::SubjectId;
use crate::model::pe::ControlPlacement;
use crate::params::Footprints;
use crate::world::{HostClass, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentKind {
    /// The business component body itself.
    Cm,
    InputUnit,
    OutputUnit,
    /// A whole control unit, resident with the component.
    ControlFull,
    /// The local share of a split control unit: command relay and state
    /// probe sampling.
    ControlStub,
    /// The deported share: state aggregation and command decisions.
    ControlLogic,
    EndpointIn,
    EndpointOut,
    /// A conduit's deported control unit.
    ConduitControl,
}

impl FragmentKind {
    pub fn footprint(&self, cm_footprint: u64, fp: &Footprints) -> u64 {
        match self {
            FragmentKind::Cm => cm_footprint,
            FragmentKind::InputUnit => fp.input_unit,
            FragmentKind::OutputUnit => fp.output_unit,
            FragmentKind::ControlFull => fp.control_full,
            FragmentKind::ControlStub => fp.control_stub,
            FragmentKind::ControlLogic => fp.control_full,
            FragmentKind::EndpointIn | FragmentKind::EndpointOut => fp.endpoint,
            FragmentKind::ConduitControl => fp.conduit_control,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FragmentKind::Cm => "cm",
            FragmentKind::InputUnit => "input_unit",
            FragmentKind::OutputUnit => "output_unit",
            FragmentKind::ControlFull => "control_full",
            FragmentKind::ControlStub => "control_stub",
            FragmentKind::ControlLogic => "control_logic",
            FragmentKind::EndpointIn => "endpoint_in",
            FragmentKind::EndpointOut => "endpoint_out",
            FragmentKind::ConduitControl => "conduit_control",
        }
    }
}

/// Fragments a processor needs on its own host, by host class.
pub fn local_pe_fragments(class: HostClass) -> &'static [FragmentKind] {
    match class {
        HostClass::Fixed | HostClass::Sensor => &[
            FragmentKind::Cm,
            FragmentKind::InputUnit,
            FragmentKind::OutputUnit,
            FragmentKind::ControlFull,
        ],
        HostClass::Light => &[
            FragmentKind::Cm,
            FragmentKind::InputUnit,
            FragmentKind::OutputUnit,
            FragmentKind::ControlStub,
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeploymentPlan {
    pub subject: SubjectId,
    pub placements: Vec<(FragmentKind, HostId)>,
}

impl DeploymentPlan {
    /// Total footprint charged per host by this plan.
    pub fn load_per_host(&self, cm_footprint: u64, fp: &Footprints) -> BTreeMap<HostId, u64> {
        let mut load: BTreeMap<HostId, u64> = BTreeMap::new();
        for (fragment, host) in &self.placements {
            *load.entry(host.clone()).or_insert(0) += fragment.footprint(cm_footprint, fp);
        }
        load
    }

    /// The control placement implied by the plan.
    pub fn control_placement(&self, component_host: &HostId) -> ControlPlacement {
        let logic = self
            .placements
            .iter()
            .find(|(f, _)| matches!(f, FragmentKind::ControlLogic | FragmentKind::ConduitControl))
            .map(|(_, h)| h.clone());
        match logic {
            Some(logic_on) if &logic_on != component_host => ControlPlacement::Split {
                stub_on: component_host.clone(),
                logic_on,
            },
            _ => ControlPlacement::Local,
        }
    }
}

/// Pick the correspondent for a light host: the reachable fixed host at
/// minimal hop count per the light host's own route table, lowest id on
/// ties.
pub fn assign_correspondent(world: &World, light: &HostId) -> Result<HostId> {
    let host = world.require_host(light)?;
    if !host.alive {
        return Err(Error::NoCorrespondent(light.clone()));
    }
    let table = world
        .routing
        .get(light)
        .map(|state| &state.table)
        .ok_or_else(|| Error::NoCorrespondent(light.clone()))?;
    let mut best: Option<(u32, HostId)> = None;
    for (destination, entry) in table {
        let Some(candidate) = world.hosts.get(destination) else {
            continue;
        };
        if candidate.class != HostClass::Fixed || !candidate.alive {
            continue;
        }
        let key = (entry.hops, destination.clone());
        if best.as_ref().map(|b| key < *b).unwrap_or(true) {
            best = Some(key);
        }
    }
    best.map(|(_, id)| id)
        .ok_or_else(|| Error::NoCorrespondent(light.clone()))
}

/// Plan a processor deployment on a host of the given class.
pub fn plan_pe_deployment(
    world: &World,
    pe: &PeId,
    cm: &CmId,
    host_id: &HostId,
) -> Result<DeploymentPlan> {
    let host = world.require_host(host_id)?;
    let subject = SubjectId::Pe(pe.clone());
    let placements = match host.class {
        HostClass::Fixed => vec![
            (FragmentKind::Cm, host_id.clone()),
            (FragmentKind::InputUnit, host_id.clone()),
            (FragmentKind::OutputUnit, host_id.clone()),
            (FragmentKind::ControlFull, host_id.clone()),
        ],
        HostClass::Light => {
            let correspondent = world
                .platform
                .correspondents
                .get(host_id)
                .cloned()
                .ok_or_else(|| Error::NoCorrespondent(host_id.clone()))?;
            vec![
                (FragmentKind::Cm, host_id.clone()),
                (FragmentKind::InputUnit, host_id.clone()),
                (FragmentKind::OutputUnit, host_id.clone()),
                (FragmentKind::ControlStub, host_id.clone()),
                (FragmentKind::ControlLogic, correspondent),
            ]
        }
        HostClass::Sensor => {
            if !host.preloaded_repository.contains(cm) {
                return Err(Error::ClosedWorldViolation {
                    host: host_id.clone(),
                    cm: cm.clone(),
                });
            }
            vec![
                (FragmentKind::Cm, host_id.clone()),
                (FragmentKind::InputUnit, host_id.clone()),
                (FragmentKind::OutputUnit, host_id.clone()),
                (FragmentKind::ControlFull, host_id.clone()),
            ]
        }
    };
    Ok(DeploymentPlan {
        subject,
        placements,
    })
}

/// Plan a conduit deployment between two endpoint hosts. The endpoint
/// carrying the input port sits on the source host, the output endpoint
/// on the target host; light endpoints keep a control stub while the
/// conduit control goes wherever the source endpoint's class dictates.
pub fn plan_conduit_deployment(
    world: &World,
    conduit: &ConduitId,
    source_host: &HostId,
    target_host: &HostId,
) -> Result<DeploymentPlan> {
    let source = world.require_host(source_host)?;
    let target = world.require_host(target_host)?;
    let mut placements = vec![
        (FragmentKind::EndpointIn, source_host.clone()),
        (FragmentKind::EndpointOut, target_host.clone()),
    ];
    if source.class == HostClass::Light {
        placements.push((FragmentKind::ControlStub, source_host.clone()));
    }
    if target.class == HostClass::Light && target_host != source_host {
        placements.push((FragmentKind::ControlStub, target_host.clone()));
    }
    let controller = match source.class {
        HostClass::Fixed | HostClass::Sensor => source_host.clone(),
        HostClass::Light => world
            .platform
            .correspondents
            .get(source_host)
            .cloned()
            .ok_or_else(|| Error::NoCorrespondent(source_host.clone()))?,
    };
    placements.push((FragmentKind::ConduitControl, controller));
    let _ = target;
    Ok(DeploymentPlan {
        subject: SubjectId::Conduit(conduit.clone()),
        placements,
    })
}

/// Shape check used by the conformance suite: does an observed placement
/// match what planning would produce for this host class today?
pub fn placement_conforms(
    world: &World,
    subject: &SubjectId,
    component_host: &HostId,
    placements: &[(FragmentKind, HostId)],
) -> bool {
    let Some(host) = world.hosts.get(component_host) else {
        return false;
    };
    let mut sorted: Vec<_> = placements.to_vec();
    sorted.sort();
    match subject {
        SubjectId::Pe(_) => match host.class {
            HostClass::Fixed | HostClass::Sensor => {
                let mut expected = vec![
                    (FragmentKind::Cm, component_host.clone()),
                    (FragmentKind::InputUnit, component_host.clone()),
                    (FragmentKind::OutputUnit, component_host.clone()),
                    (FragmentKind::ControlFull, component_host.clone()),
                ];
                expected.sort();
                sorted == expected
            }
            HostClass::Light => {
                let logic: Vec<&HostId> = placements
                    .iter()
                    .filter(|(f, _)| *f == FragmentKind::ControlLogic)
                    .map(|(_, h)| h)
                    .collect();
                if logic.len() != 1 {
                    return false;
                }
                let logic_host = logic[0].clone();
                if world.hosts.get(&logic_host).map(|h| h.class) != Some(HostClass::Fixed) {
                    return false;
                }
                let mut expected = vec![
                    (FragmentKind::Cm, component_host.clone()),
                    (FragmentKind::InputUnit, component_host.clone()),
                    (FragmentKind::OutputUnit, component_host.clone()),
                    (FragmentKind::ControlStub, component_host.clone()),
                    (FragmentKind::ControlLogic, logic_host),
                ];
                expected.sort();
                sorted == expected
            }
        },
        SubjectId::Conduit(_) => {
            // The conduit's own record knows both endpoint hosts; here we
            // only verify class rules per fragment.
            placements.iter().all(|(fragment, host_id)| {
                let Some(h) = world.hosts.get(host_id) else {
                    return false;
                };
                match fragment {
                    FragmentKind::ConduitControl => {
                        // Deported control must not sit on a light host.
                        h.class != HostClass::Light || host_id == component_host
                    }
                    FragmentKind::ControlStub => h.class == HostClass::Light,
                    _ => true,
                }
            })
        }
    }
}
