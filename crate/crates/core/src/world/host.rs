//! Simulated nodes and their resource ledgers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ids::{CmId, HostId};

/// Default memory capacity for fixed hosts when the scenario leaves it
/// out: large enough to never constrain a plan.
pub const FIXED_HOST_DEFAULT_MEMORY: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostClass {
    /// Unconstrained node: full platform, infinite energy.
    Fixed,
    /// Resource-constrained mobile node; control units and most platform
    /// services are deported to its correspondent.
    Light,
    /// Closed-world light node: no dynamic loading, components ship in a
    /// preloaded package.
    Sensor,
}

impl HostClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            HostClass::Fixed => "fixed",
            HostClass::Light => "light",
            HostClass::Sensor => "sensor",
        }
    }
}

/// Energy consumption counters. Counters only grow; the remaining battery
/// is `granted - consumed`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub consumed_tx: u64,
    pub consumed_rx: u64,
    pub consumed_cpu: u64,
}

impl EnergyLedger {
    pub fn total(&self) -> u64 {
        self.consumed_tx + self.consumed_rx + self.consumed_cpu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyKind {
    Tx,
    Rx,
    Cpu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Host {
    pub id: HostId,
    pub class: HostClass,
    pub position: (f64, f64),
    /// Radio reach in position units; `None` means no radio.
    pub radio_range: Option<f64>,
    pub memory_capacity: u64,
    pub memory_used: u64,
    /// Total energy granted so far (initial battery plus restores).
    /// Ignored for fixed hosts.
    pub battery_granted: u64,
    /// The scenario's initial battery, kept so a restore can re-grant it.
    pub initial_battery: u64,
    pub ledger: EnergyLedger,
    pub sensing_capabilities: BTreeSet<String>,
    /// Preloaded component repository; non-empty only on sensor hosts.
    pub preloaded_repository: BTreeSet<CmId>,
    pub alive: bool,
}

impl Host {
    /// Remaining battery. Fixed hosts report a large positive value and
    /// never run down.
    pub fn battery(&self) -> i64 {
        if self.class == HostClass::Fixed {
            i64::MAX
        } else {
            self.battery_granted as i64 - self.ledger.total() as i64
        }
    }

    pub fn free_memory(&self) -> u64 {
        self.memory_capacity.saturating_sub(self.memory_used)
    }

    /// Record an energy charge. No-op on fixed hosts, whose resources are
    /// treated as non-critical.
    pub fn charge(&mut self, kind: EnergyKind, amount: u64) {
        if self.class == HostClass::Fixed {
            return;
        }
        match kind {
            EnergyKind::Tx => self.ledger.consumed_tx += amount,
            EnergyKind::Rx => self.ledger.consumed_rx += amount,
            EnergyKind::Cpu => self.ledger.consumed_cpu += amount,
        }
    }

    /// Re-grant the initial battery, e.g. after a scripted restore. The
    /// consumption counters stay monotone; only the grant moves.
    pub fn regrant_battery(&mut self) {
        self.battery_granted = self.ledger.total() + self.initial_battery;
    }
}
