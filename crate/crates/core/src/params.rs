//! Tunable simulation constants.
//!
//! Every value here can be overridden from the scenario file's `params`
//! section; the defaults below are what a scenario gets when it does not
//! say otherwise.

use serde::{Deserialize, Serialize};

/// Per-fragment memory footprints in abstract memory units. The business
/// component itself is charged its descriptor footprint; everything else
/// uses these constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Footprints {
    pub input_unit: u64,
    pub output_unit: u64,
    pub control_stub: u64,
    pub control_full: u64,
    pub endpoint: u64,
    pub conduit_control: u64,
}

impl Default for Footprints {
    fn default() -> Self {
        Self {
            input_unit: 1,
            output_unit: 1,
            control_stub: 1,
            control_full: 3,
            endpoint: 1,
            conduit_control: 2,
        }
    }
}

/// Simulation-wide constants. Energy follows a first-order radio model:
/// transmitting `b` bytes over one hop costs `alpha + beta * b`, receiving
/// costs `gamma * b`, and every component activation costs the descriptor's
/// `cpu_cost`. `beta` and `gamma` are stored in thousandths so all energy
/// arithmetic stays in integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Fixed transmit cost per hop (energy units).
    pub alpha: u64,
    /// Per-byte transmit cost, thousandths of an energy unit.
    pub beta_millis: u64,
    /// Per-byte receive cost, thousandths of an energy unit.
    pub gamma_millis: u64,
    /// Consecutive missed hellos before a link is declared down.
    pub hello_miss_limit: u32,
    /// Bounded queue length for mailbox-style processors.
    pub mailbox_capacity: usize,
    /// Payload size of frames produced by source components.
    pub default_frame_bytes: u64,
    /// Payload size assumed for platform control messages.
    pub control_bytes: u64,
    /// Memory charged per deployed fragment.
    pub footprints: Footprints,
    /// Seed mixed into synthetic payload digests.
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            alpha: 50,
            beta_millis: 1000,
            gamma_millis: 500,
            hello_miss_limit: 2,
            mailbox_capacity: 16,
            default_frame_bytes: 100,
            control_bytes: 16,
            footprints: Footprints::default(),
            seed: 0,
        }
    }
}

impl SimParams {
    /// Energy charged to the transmitting host for one hop.
    pub fn tx_cost(&self, bytes: u64) -> u64 {
        self.alpha + self.beta_millis * bytes / 1000
    }

    /// Energy charged to the receiving host for one hop.
    pub fn rx_cost(&self, bytes: u64) -> u64 {
        self.gamma_millis * bytes / 1000
    }
}
