//! Deterministic simulator for self-reconfiguring component applications
//! running across fixed, mobile and sensor hosts.
//!
//! The model is uniform: every functionality — software or sensing — is a
//! business component wrapped in an elementary processor that handles its
//! data exchange and control; processors are wired by conduits carrying
//! typed flows under a transport policy. A distributed platform of four
//! services (supervision, a container factory, a conduit factory and
//! per-host routing) watches the network, evaluates designer-provided
//! configuration families and reshapes the running application when
//! routes disappear or better placements become possible. Hosts come in
//! three classes with different deployment rules: fixed hosts take whole
//! components, light hosts keep only the data path while control logic is
//! deported to a correspondent host, and sensor hosts are closed worlds
//! restricted to their preloaded packages.
//!
//! Everything runs in a single-threaded discrete-tick loop with ordered
//! state, so a (scenario, seed) pair always reproduces the same event
//! log, byte for byte.

pub mod engine;
pub mod error;
pub mod ids;
pub mod log;
pub mod model;
pub mod params;
pub mod platform;
pub mod qos;
pub mod routing;
pub mod scenario;
pub mod stats;
pub mod transport;
pub mod world;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use ids::{AppId, CmId, ConduitId, ConfigId, FlowId, HostId, NodeId, PeId, PortId};
pub use params::{Footprints, SimParams};
pub use world::{Host, HostClass, World};
