//! Mutable platform state: one supervisor per application, correspondent
//! assignments, and the per-light-host stub bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use crate::ids::{AppId, ConduitId, ConfigId, HostId, PeId};
use crate::qos::context::ContextSnapshot;
use crate::qos::diff::{DeployedEdges, DeployedNodes, EdgeKey, NodeKey, ReconfigurationScript};
use crate::qos::graph::ConfigurationFamily;
use crate::qos::select::Bindings;

/// What caused a (re)configuration decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    /// First deployment after scenario start.
    Initial,
    /// A priority route-loss alert.
    RouteAlert { alert_tick: u64 },
    /// A normal-priority route-change notification.
    RouteInfo { info_tick: u64 },
    /// Retry after a failed script or while degraded.
    Retry,
}

impl Trigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            Trigger::Initial => "initial",
            Trigger::RouteAlert { .. } => "route_alert",
            Trigger::RouteInfo { .. } => "route_info",
            Trigger::Retry => "retry",
        }
    }

    pub fn origin_tick(&self) -> Option<u64> {
        match self {
            Trigger::RouteAlert { alert_tick } => Some(*alert_tick),
            Trigger::RouteInfo { info_tick } => Some(*info_tick),
            _ => None,
        }
    }

    /// Alerts and retries force redeployment; infos only reconfigure on
    /// a strictly better score.
    pub fn forces_reconfiguration(&self) -> bool {
        !matches!(self, Trigger::RouteInfo { .. })
    }
}

/// What is actually deployed right now, by bound key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Deployment {
    pub config: Option<ConfigId>,
    pub bindings: Bindings,
    pub nodes: DeployedNodes,
    pub edges: DeployedEdges,
}

impl Deployment {
    pub fn hosts(&self) -> BTreeSet<HostId> {
        let mut hosts: BTreeSet<HostId> = self.nodes.keys().map(|k| k.host.clone()).collect();
        for key in self.edges.keys() {
            hosts.insert(key.source.host.clone());
            hosts.insert(key.target.host.clone());
        }
        hosts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecPhase {
    DestroyConduits,
    DestroyContainers,
    CreateContainers,
    CreateConduits,
    Start,
}

impl ExecPhase {
    pub fn next(&self) -> Option<ExecPhase> {
        match self {
            ExecPhase::DestroyConduits => Some(ExecPhase::DestroyContainers),
            ExecPhase::DestroyContainers => Some(ExecPhase::CreateContainers),
            ExecPhase::CreateContainers => Some(ExecPhase::CreateConduits),
            ExecPhase::CreateConduits => Some(ExecPhase::Start),
            ExecPhase::Start => None,
        }
    }
}

/// What a pending acknowledgement token stands for, so the deployment
/// records can be updated when the ack arrives.
#[derive(Debug, Clone, PartialEq)]
pub enum PendingAction {
    DestroyConduit(ConduitId),
    DestroyContainer(PeId),
    CreateContainer(NodeKey, PeId),
    CreateConduit(EdgeKey, ConduitId),
    Start(crate::model::control::SubjectId),
}

/// A reconfiguration script in flight. Batches are sent phase by phase;
/// a phase completes when every acknowledgement came back.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptExecution {
    pub script: ReconfigurationScript,
    pub phase: ExecPhase,
    pub sent: bool,
    pub pending: BTreeMap<String, PendingAction>,
    pub decision_tick: u64,
    pub trigger: Trigger,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppSupervisor {
    pub app: AppId,
    pub host: HostId,
    pub family: ConfigurationFamily,
    pub deployment: Deployment,
    pub exec: Option<ScriptExecution>,
    /// A pending re-evaluation and its cause.
    pub reeval: Option<Trigger>,
    /// Set while no valid configuration exists; retried every tick.
    pub degraded: bool,
    /// Configurations that failed to deploy in the current round.
    pub excluded: BTreeSet<ConfigId>,
}

impl AppSupervisor {
    pub fn new(app: AppId, host: HostId, family: ConfigurationFamily) -> Self {
        Self {
            app,
            host,
            family,
            deployment: Deployment::default(),
            exec: None,
            reeval: Some(Trigger::Initial),
            degraded: false,
            excluded: BTreeSet::new(),
        }
    }
}

/// Per-light-host stub bookkeeping for correspondent loss handling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubState {
    /// A migration request is out; `since` is its send tick.
    pub pending_since: Option<u64>,
}

/// One selection decision, kept for offline equivalence checking against
/// the exhaustive oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub tick: u64,
    pub app: AppId,
    pub trigger: &'static str,
    pub chosen: Option<ConfigId>,
    /// Configurations excluded from this decision (failed deploys).
    pub excluded: BTreeSet<ConfigId>,
    pub context: ContextSnapshot,
}

#[derive(Debug, Clone, Default)]
pub struct PlatformState {
    pub apps: BTreeMap<AppId, AppSupervisor>,
    /// Light host -> its current correspondent (nearest fixed host).
    pub correspondents: BTreeMap<HostId, HostId>,
    pub stubs: BTreeMap<HostId, StubState>,
    /// Trace of every selection decision taken during the run.
    pub decisions: Vec<Decision>,
}
