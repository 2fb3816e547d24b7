use thiserror::Error;

use crate::ids::{CmId, ConduitId, ConfigId, HostId, NodeId, PeId, PortId};

/// Errors surfaced by the model, the platform services and the scenario
/// loader. Variants mirror the failure modes callers are expected to
/// distinguish; everything else is a bug.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown descriptor `{0}`")]
    UnknownDescriptor(CmId),

    #[error("capacity exceeded on host `{host}`: need {needed} memory units, {free} free")]
    CapacityExceeded {
        host: HostId,
        needed: u64,
        free: u64,
    },

    #[error("host `{host}` lacks sensing capability `{capability}`")]
    CapabilityMismatch { host: HostId, capability: String },

    #[error("port `{port}` of `{pe}` is already attached to conduit `{conduit}`")]
    PortBusy {
        pe: PeId,
        port: PortId,
        conduit: ConduitId,
    },

    #[error("flow types of port `{port}` on `{pe}` do not match the conduit flow list")]
    FlowTypeMismatch { pe: PeId, port: PortId },

    #[error("dangling endpoint: {0}")]
    DanglingEndpoint(String),

    #[error("unknown command target `{0}`")]
    UnknownTarget(String),

    #[error("invalid transition: `{subject}` is {state}, cannot apply {command}")]
    InvalidTransition {
        subject: String,
        state: String,
        command: String,
    },

    #[error("no route from `{from}` to `{to}`")]
    NoRoute { from: HostId, to: HostId },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("no correspondent host reachable from `{0}`")]
    NoCorrespondent(HostId),

    #[error("closed world violation: `{cm}` is not in the package preloaded on `{host}`")]
    ClosedWorldViolation { host: HostId, cm: CmId },

    #[error("unknown endpoint: {0}")]
    UnknownEndpoint(String),

    #[error("configuration `{config}` is not valid in this context: {reason}")]
    InvalidConfiguration { config: ConfigId, reason: String },

    #[error("node `{0}` has no host binding")]
    UnboundNode(NodeId),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dangling reference: {kind} `{id}` is not declared")]
    DanglingReference { kind: &'static str, id: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("malformed log at line {line}: {message}")]
    MalformedLog { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
