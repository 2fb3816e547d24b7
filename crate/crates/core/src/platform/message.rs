//! The platform protocol: every message the four services exchange.

use crate::ids::{AppId, CmId, ConduitId, FlowId, HostId, PeId, PortId};
use crate::log::LogKind;
use crate::model::conduit::TransportPolicy;
use crate::model::control::{ControlCommand, StateReport, SubjectId};
use crate::model::descriptor::InteractionStyle;
use crate::platform::plan::{DeploymentPlan, FragmentKind};

/// Correlates a reply with the request that caused it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AckToken(pub String);

impl AckToken {
    pub fn script(app: &AppId, subject: &str) -> Self {
        AckToken(format!("script:{app}:{subject}"))
    }

    pub fn migration(light: &HostId) -> Self {
        AckToken(format!("migrate:{light}"))
    }
}

/// Two-stage factory delivery: the supervisor directs the factory host,
/// the factory deploys on the subject host.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Directive,
    Deploy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerSpec {
    pub app: AppId,
    pub pe: PeId,
    pub cm: CmId,
    pub host: HostId,
    /// Communication adapter, chosen from the component's style.
    pub adapter: InteractionStyle,
    pub plan: DeploymentPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConduitSpec {
    pub app: AppId,
    pub conduit: ConduitId,
    pub source: (PeId, PortId),
    pub target: (PeId, PortId),
    pub source_host: HostId,
    pub target_host: HostId,
    pub flows: Vec<FlowId>,
    pub policy: TransportPolicy,
    pub plan: DeploymentPlan,
}

/// Snapshot of a deported control unit, carried by MIGRATE_UC: the last
/// known report stands in for richer state transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct UcSnapshot {
    pub subject: SubjectId,
    pub fragment: FragmentKind,
    pub last_report: Option<StateReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MigratePhase {
    /// Light host asks the new correspondent to adopt its orphans.
    Request,
    /// New correspondent tells the old one to release the fragments.
    Release,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlatformMessage {
    StateReport {
        report: StateReport,
        ack: Option<AckToken>,
        error: Option<String>,
    },
    Command {
        target: SubjectId,
        command: ControlCommand,
        reply_to: HostId,
        ack: Option<AckToken>,
    },
    CreateContainer {
        spec: ContainerSpec,
        stage: Stage,
        reply_to: HostId,
        ack: AckToken,
    },
    DestroyContainer {
        app: AppId,
        pe: PeId,
        stage: Stage,
        reply_to: HostId,
        ack: AckToken,
    },
    CreateConduit {
        spec: ConduitSpec,
        stage: Stage,
        reply_to: HostId,
        ack: AckToken,
    },
    DestroyConduit {
        app: AppId,
        conduit: ConduitId,
        stage: Stage,
        reply_to: HostId,
        ack: AckToken,
    },
    RouteAlert {
        owner: HostId,
        lost: HostId,
    },
    RouteInfo {
        owner: HostId,
        destination: HostId,
        old_hops: u32,
        new_hops: u32,
    },
    MigrateUc {
        light: HostId,
        old_correspondent: Option<HostId>,
        phase: MigratePhase,
        snapshots: Vec<UcSnapshot>,
    },
}

impl PlatformMessage {
    pub fn log_kind(&self) -> LogKind {
        match self {
            PlatformMessage::StateReport { .. } => LogKind::StateReport,
            PlatformMessage::Command { .. } => LogKind::Command,
            PlatformMessage::CreateContainer { .. } => LogKind::CreateContainer,
            PlatformMessage::DestroyContainer { .. } => LogKind::DestroyContainer,
            PlatformMessage::CreateConduit { .. } => LogKind::CreateConduit,
            PlatformMessage::DestroyConduit { .. } => LogKind::DestroyConduit,
            PlatformMessage::RouteAlert { .. } => LogKind::RouteAlert,
            PlatformMessage::RouteInfo { .. } => LogKind::RouteInfo,
            PlatformMessage::MigrateUc { .. } => LogKind::MigrateUc,
        }
    }

    /// One-line payload summary for the event log.
    pub fn summary(&self) -> String {
        match self {
            PlatformMessage::StateReport { report, error, .. } => match error {
                Some(cause) => format!("{} error: {cause}", report.source),
                None => format!("{} {}", report.source, report.state.as_str()),
            },
            PlatformMessage::Command {
                target, command, ..
            } => {
                format!("{} {}", command.as_str(), target)
            }
            PlatformMessage::CreateContainer { spec, stage, .. } => {
                format!(
                    "{} {} on {}{}",
                    spec.cm,
                    spec.pe,
                    spec.host,
                    stage_tag(stage)
                )
            }
            PlatformMessage::DestroyContainer { pe, stage, .. } => {
                format!("{pe}{}", stage_tag(stage))
            }
            PlatformMessage::CreateConduit { spec, stage, .. } => format!(
                "{} {} -> {} ({}){}",
                spec.conduit,
                spec.source_host,
                spec.target_host,
                spec.policy.as_str(),
                stage_tag(stage)
            ),
            PlatformMessage::DestroyConduit { conduit, stage, .. } => {
                format!("{conduit}{}", stage_tag(stage))
            }
            PlatformMessage::RouteAlert { owner, lost } => format!("{owner} lost route to {lost}"),
            PlatformMessage::RouteInfo {
                owner,
                destination,
                old_hops,
                new_hops,
            } => {
                format!("{owner} route to {destination}: {old_hops} -> {new_hops} hops")
            }
            PlatformMessage::MigrateUc {
                light,
                old_correspondent,
                phase,
                snapshots,
            } => {
                let old = old_correspondent
                    .as_ref()
                    .map(|h| h.as_str())
                    .unwrap_or("-");
                let verb = match phase {
                    MigratePhase::Request => "adopt",
                    MigratePhase::Release => "release",
                };
                format!(
                    "{verb} {} orphan units of {light} (old: {old})",
                    snapshots.len()
                )
            }
        }
    }
}

fn stage_tag(stage: &Stage) -> &'static str {
    match stage {
        Stage::Directive => "",
        Stage::Deploy => " [deploy]",
    }
}
