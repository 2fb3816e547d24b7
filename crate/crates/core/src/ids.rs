//! String-backed identifier newtypes for the domain entities.
//!
//! Identifiers are ordinary UTF-8 strings chosen by scenario authors; the
//! newtypes only exist so the compiler keeps host ids, component ids and
//! configuration ids from being mixed up.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }
    };
}

id_type!(
    /// A simulated node (fixed, light or sensor host).
    HostId
);
id_type!(
    /// A business component descriptor in the repository.
    CmId
);
id_type!(
    /// A data flow type carried over ports and conduits.
    FlowId
);
id_type!(
    /// A deployed elementary processor instance.
    PeId
);
id_type!(
    /// A deployed conduit instance.
    ConduitId
);
id_type!(
    /// An input or output port on a processor or conduit.
    PortId
);
id_type!(
    /// One configuration graph inside a family.
    ConfigId
);
id_type!(
    /// A node of a configuration graph.
    NodeId
);
id_type!(
    /// An application supervised by the platform.
    AppId
);
