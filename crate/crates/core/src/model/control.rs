//! Control commands and state reports: the control unit's conversation
//! with the supervision service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ConduitId, PeId};
use crate::model::pe::ComponentState;
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCommand {
    Start,
    Stop,
    SetParam { key: String, value: String },
    ProbeState,
}

impl ControlCommand {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlCommand::Start => "start",
            ControlCommand::Stop => "stop",
            ControlCommand::SetParam { .. } => "set_param",
            ControlCommand::ProbeState => "probe_state",
        }
    }
}

/// Either kind of controllable component.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubjectId {
    Pe(PeId),
    Conduit(ConduitId),
}

impl SubjectId {
    pub fn as_str(&self) -> &str {
        match self {
            SubjectId::Pe(id) => id.as_str(),
            SubjectId::Conduit(id) => id.as_str(),
        }
    }
}

impl std::fmt::Display for SubjectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateReport {
    pub source: SubjectId,
    pub state: ComponentState,
    /// Queue depth per port (processors) or per flow (conduits).
    pub queue_depths: BTreeMap<String, u64>,
    pub processed_recent: u64,
    pub drops_recent: u64,
    pub blocked: bool,
}

impl World {
    /// Apply a control command directly at the component. Message routing
    /// to a deported control unit happens in the platform layer; this is
    /// the state machine itself, which also answers every probe with a
    /// fresh report.
    pub fn apply_command(
        &mut self,
        target: &SubjectId,
        cmd: &ControlCommand,
    ) -> Result<StateReport> {
        let state = self.subject_state(target)?;
        let next = match cmd {
            ControlCommand::Start => match state {
                ComponentState::Created | ComponentState::Stopped => Some(ComponentState::Running),
                ComponentState::Running | ComponentState::Failed => None,
            },
            ControlCommand::Stop => match state {
                ComponentState::Running | ComponentState::Created => Some(ComponentState::Stopped),
                ComponentState::Stopped | ComponentState::Failed => None,
            },
            ControlCommand::SetParam { .. } | ControlCommand::ProbeState => match state {
                ComponentState::Failed => None,
                _ => Some(state),
            },
        };
        let Some(next) = next else {
            return Err(Error::InvalidTransition {
                subject: target.to_string(),
                state: state.as_str().to_owned(),
                command: cmd.as_str().to_owned(),
            });
        };

        match target {
            SubjectId::Pe(id) => {
                let pe = self.pes.get_mut(id).unwrap();
                pe.state = next;
                if let ControlCommand::SetParam { key, value } = cmd {
                    pe.params.insert(key.clone(), value.clone());
                }
            }
            SubjectId::Conduit(id) => {
                self.conduits.get_mut(id).unwrap().state = next;
            }
        }
        Ok(self.state_report(target).unwrap())
    }

    pub fn subject_state(&self, target: &SubjectId) -> Result<ComponentState> {
        match target {
            SubjectId::Pe(id) => self.pes.get(id).map(|pe| pe.state),
            SubjectId::Conduit(id) => self.conduits.get(id).map(|c| c.state),
        }
        .ok_or_else(|| Error::UnknownTarget(target.to_string()))
    }

    /// Current metrics for a component, as carried in STATE_REPORTs.
    pub fn state_report(&self, target: &SubjectId) -> Result<StateReport> {
        match target {
            SubjectId::Pe(id) => {
                let pe = self
                    .pes
                    .get(id)
                    .ok_or_else(|| Error::UnknownTarget(target.to_string()))?;
                Ok(StateReport {
                    source: target.clone(),
                    state: pe.state,
                    queue_depths: pe
                        .queue_depths()
                        .into_iter()
                        .map(|(port, depth)| (port.to_string(), depth as u64))
                        .collect(),
                    processed_recent: pe.processed_recent,
                    drops_recent: pe.drops_recent,
                    blocked: false,
                })
            }
            SubjectId::Conduit(id) => {
                let conduit = self
                    .conduits
                    .get(id)
                    .ok_or_else(|| Error::UnknownTarget(target.to_string()))?;
                Ok(StateReport {
                    source: target.clone(),
                    state: conduit.state,
                    queue_depths: conduit
                        .buffer_depth_per_flow()
                        .into_iter()
                        .map(|(flow, depth)| (flow.to_string(), depth as u64))
                        .collect(),
                    processed_recent: conduit.delivered_total,
                    drops_recent: conduit.drops_recent,
                    blocked: conduit.blocked,
                })
            }
        }
    }
}
