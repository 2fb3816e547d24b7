//! The simulated world: hosts, links, components, in-flight traffic and
//! every piece of platform state. All maps are ordered so iteration, and
//! therefore the whole simulation, is deterministic.

pub mod host;

use std::collections::{BTreeMap, BTreeSet};

pub use host::{EnergyKind, EnergyLedger, Host, HostClass};

use crate::ids::{CmId, ConduitId, HostId, PeId};
use crate::log::{EventLogRecord, LogKind};
use crate::model::conduit::Conduit;
use crate::model::descriptor::BusinessComponentDescriptor;
use crate::model::pe::ElementaryProcessor;
use crate::params::SimParams;
use crate::platform::plan::FragmentKind;
use crate::platform::state::PlatformState;
use crate::routing::RoutingState;
use crate::transport::{Envelope, InFlight};

/// Discrete clock plus the global emission sequence that orders log
/// records and messages issued within the same tick.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimClock {
    pub tick: u64,
    next_seq: u64,
}

impl SimClock {
    pub fn next_seq(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Wired,
    Wireless,
}

/// Global frame accounting. `buffered` is deliberately not tracked here:
/// it is recomputed by scanning the actual buffers, which is what makes
/// the conservation check meaningful.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameCounters {
    pub emitted: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone)]
pub struct World {
    pub params: SimParams,
    pub clock: SimClock,
    pub hosts: BTreeMap<HostId, Host>,
    /// Scenario-declared wired links, endpoint pairs normalized.
    pub wired_links: BTreeSet<(HostId, HostId)>,
    /// Administratively failed links (wired or wireless), normalized.
    pub failed_links: BTreeSet<(HostId, HostId)>,
    pub repository: BTreeMap<CmId, BusinessComponentDescriptor>,
    pub pes: BTreeMap<PeId, ElementaryProcessor>,
    pub conduits: BTreeMap<ConduitId, Conduit>,
    /// Messages travelling between hosts, one hop per tick.
    pub transit: Vec<InFlight>,
    /// Messages delivered and waiting for the platform phase.
    pub inboxes: BTreeMap<HostId, Vec<Envelope>>,
    pub routing: BTreeMap<HostId, RoutingState>,
    pub platform: PlatformState,
    pub counters: FrameCounters,
    /// Records accumulated during the current tick; the engine drains
    /// them into the log writer.
    pub log_buffer: Vec<EventLogRecord>,
}

pub fn norm_pair(a: &HostId, b: &HostId) -> (HostId, HostId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl World {
    pub fn new(params: SimParams) -> Self {
        World {
            params,
            clock: SimClock::default(),
            hosts: BTreeMap::new(),
            wired_links: BTreeSet::new(),
            failed_links: BTreeSet::new(),
            repository: BTreeMap::new(),
            pes: BTreeMap::new(),
            conduits: BTreeMap::new(),
            transit: Vec::new(),
            inboxes: BTreeMap::new(),
            routing: BTreeMap::new(),
            platform: PlatformState::default(),
            counters: FrameCounters::default(),
            log_buffer: Vec::new(),
        }
    }

    pub fn host(&self, id: &HostId) -> Option<&Host> {
        self.hosts.get(id)
    }

    pub fn host_alive(&self, id: &HostId) -> bool {
        self.hosts.get(id).map(|h| h.alive).unwrap_or(false)
    }

    /// Append a record to the current tick's log.
    pub fn log(&mut self, kind: LogKind, host: &HostId, details: Vec<(&str, String)>) {
        let seq = self.clock.next_seq();
        self.log_buffer.push(EventLogRecord {
            tick: self.clock.tick,
            seq,
            kind,
            host: host.as_str().to_owned(),
            details: details
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect(),
        });
    }

    pub fn log_global(&mut self, kind: LogKind, details: Vec<(&str, String)>) {
        self.log_global_owned(
            kind,
            details
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect(),
        )
    }

    pub fn log_global_owned(&mut self, kind: LogKind, details: Vec<(String, String)>) {
        let seq = self.clock.next_seq();
        self.log_buffer.push(EventLogRecord {
            tick: self.clock.tick,
            seq,
            kind,
            host: String::new(),
            details: details.into_iter().collect(),
        });
    }

    // ------------------------------------------------------------------
    // Links and topology
    // ------------------------------------------------------------------

    /// The current kind of the live link between two hosts, if any.
    /// Wireless links exist exactly when both hosts are alive, both have
    /// a radio, they sit within the smaller of the two ranges, and the
    /// pair is not administratively failed.
    pub fn link_kind(&self, a: &HostId, b: &HostId) -> Option<LinkKind> {
        if a == b {
            return None;
        }
        let (ha, hb) = (self.hosts.get(a)?, self.hosts.get(b)?);
        if !ha.alive || !hb.alive {
            return None;
        }
        if self.failed_links.contains(&norm_pair(a, b)) {
            return None;
        }
        if self.wired_links.contains(&norm_pair(a, b)) {
            return Some(LinkKind::Wired);
        }
        if let (Some(ra), Some(rb)) = (ha.radio_range, hb.radio_range) {
            let dx = ha.position.0 - hb.position.0;
            let dy = ha.position.1 - hb.position.1;
            let range = ra.min(rb);
            if dx * dx + dy * dy <= range * range {
                return Some(LinkKind::Wireless);
            }
        }
        None
    }

    /// Adjacency over live links.
    pub fn adjacency(&self) -> BTreeMap<HostId, BTreeSet<HostId>> {
        let ids: Vec<HostId> = self.hosts.keys().cloned().collect();
        let mut adj: BTreeMap<HostId, BTreeSet<HostId>> =
            ids.iter().map(|id| (id.clone(), BTreeSet::new())).collect();
        for (i, a) in ids.iter().enumerate() {
            for b in ids.iter().skip(i + 1) {
                if self.link_kind(a, b).is_some() {
                    adj.get_mut(a).unwrap().insert(b.clone());
                    adj.get_mut(b).unwrap().insert(a.clone());
                }
            }
        }
        adj
    }

    /// Ground-truth hop counts from `src` over live links (only between
    /// alive hosts). Used for context snapshots and test oracles; the
    /// routing service maintains its own, message-driven view.
    pub fn hops_from(&self, src: &HostId) -> BTreeMap<HostId, u32> {
        bfs_hops(&self.adjacency(), src)
    }

    // ------------------------------------------------------------------
    // Capacity and energy
    // ------------------------------------------------------------------

    /// True when the host can still take the given fragments on top of
    /// what it already holds. `cm_footprint` is the descriptor footprint
    /// charged for `FragmentKind::Cm` entries.
    pub fn check_capacity(
        host: &Host,
        fragments: &[FragmentKind],
        cm_footprint: u64,
        params: &SimParams,
    ) -> bool {
        let needed: u64 = fragments
            .iter()
            .map(|f| f.footprint(cm_footprint, &params.footprints))
            .sum();
        host.memory_used + needed <= host.memory_capacity
    }

    pub fn charge_energy(&mut self, host: &HostId, kind: EnergyKind, amount: u64) {
        if let Some(h) = self.hosts.get_mut(host) {
            h.charge(kind, amount);
        }
    }

    // ------------------------------------------------------------------
    // Scripted topology events
    // ------------------------------------------------------------------

    pub fn fail_link(&mut self, a: &HostId, b: &HostId) -> crate::error::Result<()> {
        self.require_host(a)?;
        self.require_host(b)?;
        self.failed_links.insert(norm_pair(a, b));
        Ok(())
    }

    pub fn restore_link(&mut self, a: &HostId, b: &HostId) -> crate::error::Result<()> {
        self.require_host(a)?;
        self.require_host(b)?;
        self.failed_links.remove(&norm_pair(a, b));
        Ok(())
    }

    pub fn move_host(&mut self, id: &HostId, position: (f64, f64)) -> crate::error::Result<()> {
        let host = self
            .hosts
            .get_mut(id)
            .ok_or_else(|| crate::error::Error::UnknownEntity(id.to_string()))?;
        host.position = position;
        Ok(())
    }

    pub fn restore_host(&mut self, id: &HostId) -> crate::error::Result<()> {
        let host = self
            .hosts
            .get_mut(id)
            .ok_or_else(|| crate::error::Error::UnknownEntity(id.to_string()))?;
        host.alive = true;
        host.regrant_battery();
        Ok(())
    }

    /// Kill a host: mark it dead, clear its pending traffic, fail every
    /// component it carries and drop their buffered frames. Links vanish
    /// implicitly because `link_kind` checks liveness.
    pub fn kill_host(&mut self, id: &HostId, cause: &str) {
        let Some(host) = self.hosts.get_mut(id) else {
            return;
        };
        if !host.alive {
            return;
        }
        host.alive = false;
        self.log(
            LogKind::HostDied,
            &id.clone(),
            vec![("cause", cause.to_owned())],
        );

        // Undelivered inbox messages die with the host.
        self.inboxes.remove(id);

        let pe_ids: Vec<PeId> = self
            .pes
            .values()
            .filter(|pe| &pe.host == id)
            .map(|pe| pe.id.clone())
            .collect();
        for pe_id in pe_ids {
            let dropped = {
                let pe = self.pes.get_mut(&pe_id).unwrap();
                pe.fail()
            };
            self.drop_frames(dropped, "host_died");
        }

        let conduit_ids: Vec<ConduitId> = self
            .conduits
            .values()
            .filter(|c| &c.source_host == id || &c.target_host == id)
            .map(|c| c.id.clone())
            .collect();
        for cid in conduit_ids {
            let dropped = {
                let conduit = self.conduits.get_mut(&cid).unwrap();
                conduit.fail()
            };
            self.drop_frames(dropped, "host_died");
            // In-flight frames for a failed conduit are lost as well.
            let purged = self.purge_transit_for_conduit(&cid);
            self.drop_frames(purged, "host_died");
        }
    }

    pub fn require_host(&self, id: &HostId) -> crate::error::Result<&Host> {
        self.hosts
            .get(id)
            .ok_or_else(|| crate::error::Error::UnknownEntity(id.to_string()))
    }

    /// Count and log a batch of dropped frames.
    pub fn drop_frames(&mut self, frames: Vec<crate::model::frame::DataFrame>, reason: &str) {
        for frame in frames {
            self.counters.dropped += 1;
            self.log_global(
                LogKind::FrameDropped,
                vec![
                    ("flow", frame.flow.to_string()),
                    ("seq", frame.seq.to_string()),
                    ("producer", frame.producer.to_string()),
                    ("reason", reason.to_owned()),
                ],
            );
        }
    }

    /// Remove all in-flight frames belonging to a conduit; returns them
    /// so the caller can account for the loss.
    pub fn purge_transit_for_conduit(
        &mut self,
        conduit: &ConduitId,
    ) -> Vec<crate::model::frame::DataFrame> {
        let mut kept = Vec::with_capacity(self.transit.len());
        let mut purged = Vec::new();
        for entry in std::mem::take(&mut self.transit) {
            match entry.envelope.body.conduit_frame(conduit) {
                Some(frame) => purged.push(frame),
                None => kept.push(entry),
            }
        }
        self.transit = kept;
        purged
    }

    /// Frames currently sitting in any buffer: output staging, conduit
    /// buffers and the network. Input queues are past the delivery point
    /// and therefore not counted.
    pub fn buffered_frames(&self) -> u64 {
        let staged: u64 = self.pes.values().map(|pe| pe.staged_count()).sum();
        let conduit_buffered: u64 = self.conduits.values().map(|c| c.buffered_count()).sum();
        let in_transit = self
            .transit
            .iter()
            .filter(|m| m.envelope.body.is_data())
            .count() as u64;
        staged + conduit_buffered + in_transit
    }
}

/// Breadth-first hop counts over an adjacency map. Neighbor order is the
/// map order, so results are deterministic.
pub fn bfs_hops(adj: &BTreeMap<HostId, BTreeSet<HostId>>, src: &HostId) -> BTreeMap<HostId, u32> {
    let mut dist = BTreeMap::new();
    if !adj.contains_key(src) {
        return dist;
    }
    dist.insert(src.clone(), 0);
    let mut frontier = vec![src.clone()];
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for node in frontier {
            for neighbor in adj.get(&node).into_iter().flatten() {
                if !dist.contains_key(neighbor) {
                    dist.insert(neighbor.clone(), depth);
                    next.push(neighbor.clone());
                }
            }
        }
        frontier = next;
    }
    dist
}
