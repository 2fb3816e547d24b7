//! Hop-by-hop message transport. Every inter-host hop takes one tick and
//! charges the first-order radio costs to the two hosts involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ConduitId, HostId};
use crate::model::frame::DataFrame;
use crate::platform::message::PlatformMessage;
use crate::world::{EnergyKind, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Normal,
    High,
}

impl Priority {
    pub fn as_str(&self) -> &'static str {
        match self {
            Priority::Normal => "normal",
            Priority::High => "priority",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Platform(Box<PlatformMessage>),
    Data {
        conduit: ConduitId,
        frame: DataFrame,
    },
}

impl MessageBody {
    pub fn is_data(&self) -> bool {
        matches!(self, MessageBody::Data { .. })
    }

    /// Extract the frame if this is data traffic for the given conduit.
    pub fn conduit_frame(&self, id: &ConduitId) -> Option<DataFrame> {
        match self {
            MessageBody::Data { conduit, frame } if conduit == id => Some(frame.clone()),
            _ => None,
        }
    }

    pub fn bytes(&self, control_bytes: u64) -> u64 {
        match self {
            MessageBody::Platform(_) => control_bytes,
            MessageBody::Data { frame, .. } => frame.payload_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub src: HostId,
    pub dst: HostId,
    pub priority: Priority,
    pub seq: u64,
    pub body: MessageBody,
}

/// A message between hops: it reaches `next_host` at `arrival_tick`.
#[derive(Debug, Clone, PartialEq)]
pub struct InFlight {
    pub arrival_tick: u64,
    pub next_host: HostId,
    pub envelope: Envelope,
}

impl World {
    /// Send a platform message, charging energy per the radio model.
    /// Self-sends are delivered immediately and cost nothing.
    pub fn send_platform(
        &mut self,
        src: &HostId,
        dst: &HostId,
        priority: Priority,
        message: PlatformMessage,
    ) -> Result<()> {
        self.log_platform_send(src, dst, priority, &message);
        self.send_body(src, dst, priority, MessageBody::Platform(Box::new(message)))
    }

    /// Route a message body toward `dst`, starting from `src`'s route
    /// table. `NoRoute` is returned (and logged by the caller) when the
    /// sender has no entry for the destination.
    pub fn send_body(
        &mut self,
        src: &HostId,
        dst: &HostId,
        priority: Priority,
        body: MessageBody,
    ) -> Result<()> {
        let seq = self.clock.next_seq();
        let envelope = Envelope {
            src: src.clone(),
            dst: dst.clone(),
            priority,
            seq,
            body,
        };
        if src == dst {
            self.inboxes.entry(dst.clone()).or_default().push(envelope);
            return Ok(());
        }
        let next_hop = self
            .routing
            .get(src)
            .and_then(|r| r.table.get(dst))
            .map(|entry| entry.next_hop.clone())
            .ok_or_else(|| Error::NoRoute {
                from: src.clone(),
                to: dst.clone(),
            })?;
        let bytes = envelope.body.bytes(self.params.control_bytes);
        let tx = self.params.tx_cost(bytes);
        self.charge_energy(src, EnergyKind::Tx, tx);
        self.transit.push(InFlight {
            arrival_tick: self.clock.tick + 1,
            next_host: next_hop,
            envelope,
        });
        Ok(())
    }

    /// Phase 1 of every tick: messages scheduled for this tick arrive at
    /// their next hop. Final-hop deliveries land in host inboxes or
    /// conduit buffers; everything else is forwarded one more hop.
    pub fn deliver_transit(&mut self) {
        let now = self.clock.tick;
        let mut due: Vec<InFlight> = Vec::new();
        let mut later: Vec<InFlight> = Vec::new();
        for entry in std::mem::take(&mut self.transit) {
            if entry.arrival_tick <= now {
                due.push(entry);
            } else {
                later.push(entry);
            }
        }
        self.transit = later;
        due.sort_by_key(|m| m.envelope.seq);

        for InFlight {
            next_host,
            envelope,
            ..
        } in due
        {
            if !self.host_alive(&next_host) {
                self.drop_envelope(envelope, "dead_host");
                continue;
            }
            let bytes = envelope.body.bytes(self.params.control_bytes);
            let rx = self.params.rx_cost(bytes);
            self.charge_energy(&next_host, EnergyKind::Rx, rx);

            if next_host == envelope.dst {
                match envelope.body {
                    MessageBody::Platform(_) => {
                        self.inboxes.entry(next_host).or_default().push(envelope);
                    }
                    MessageBody::Data { conduit, frame } => match self.conduits.get_mut(&conduit) {
                        Some(c) => c.accept(frame),
                        None => self.drop_frames(vec![frame], "conduit_destroyed"),
                    },
                }
                continue;
            }

            // Forward.
            let next = self
                .routing
                .get(&next_host)
                .and_then(|r| r.table.get(&envelope.dst))
                .map(|entry| entry.next_hop.clone());
            match next {
                Some(hop) => {
                    let tx = self.params.tx_cost(bytes);
                    self.charge_energy(&next_host, EnergyKind::Tx, tx);
                    self.transit.push(InFlight {
                        arrival_tick: now + 1,
                        next_host: hop,
                        envelope,
                    });
                }
                None => self.drop_envelope(envelope, "no_route"),
            }
        }
    }

    fn drop_envelope(&mut self, envelope: Envelope, reason: &str) {
        match envelope.body {
            MessageBody::Data { frame, .. } => self.drop_frames(vec![frame], reason),
            MessageBody::Platform(message) => {
                let host = envelope.src.clone();
                self.log(
                    message.log_kind(),
                    &host,
                    vec![
                        ("event", "dropped".to_owned()),
                        ("reason", reason.to_owned()),
                        ("dst", envelope.dst.to_string()),
                        ("summary", message.summary()),
                    ],
                );
            }
        }
    }

    fn log_platform_send(
        &mut self,
        src: &HostId,
        dst: &HostId,
        priority: Priority,
        message: &PlatformMessage,
    ) {
        self.log(
            message.log_kind(),
            src,
            vec![
                ("dst", dst.to_string()),
                ("priority", priority.as_str().to_owned()),
                ("summary", message.summary()),
            ],
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{self};
    use crate::testutil::{line_world, report_message};
    use crate::world::HostClass;

    /// Two-hop path, 100-byte payload: both transmitting hosts pay
    /// alpha + beta*bytes, both receiving hosts pay gamma*bytes.
    #[test]
    fn two_hop_energy_charges_match_radio_model() {
        let mut world = line_world(&[
            ("A", HostClass::Light),
            ("B", HostClass::Light),
            ("C", HostClass::Light),
        ]);
        routing::settle(&mut world, 8);
        let frame = crate::testutil::frame_sized("video", 1, 100);
        world
            .send_body(
                &"A".into(),
                &"C".into(),
                Priority::Normal,
                MessageBody::Data {
                    conduit: "cd:x".into(),
                    frame,
                },
            )
            .unwrap();
        // Hop 1: A -> B.
        world.clock.tick += 1;
        world.deliver_transit();
        // Hop 2: B -> C.
        world.clock.tick += 1;
        world.deliver_transit();

        let (a, b, c) = (
            &world.hosts[&"A".into()],
            &world.hosts[&"B".into()],
            &world.hosts[&"C".into()],
        );
        assert_eq!(a.ledger.consumed_tx, 150);
        assert_eq!(a.ledger.consumed_rx, 0);
        assert_eq!(b.ledger.consumed_tx, 150);
        assert_eq!(b.ledger.consumed_rx, 50);
        assert_eq!(c.ledger.consumed_rx, 50);
        assert_eq!(c.ledger.consumed_tx, 0);
    }

    #[test]
    fn self_send_is_free_and_instant() {
        let mut world = line_world(&[("A", HostClass::Light)]);
        routing::settle(&mut world, 2);
        world
            .send_platform(&"A".into(), &"A".into(), Priority::Normal, report_message())
            .unwrap();
        assert_eq!(world.inboxes[&"A".into()].len(), 1);
        assert_eq!(world.hosts[&"A".into()].ledger.total(), 0);
    }

    #[test]
    fn unreachable_destination_is_no_route() {
        let mut world = line_world(&[("A", HostClass::Light)]);
        let mut far = crate::testutil::mk_host("Z", HostClass::Light, (1000.0, 1000.0), Some(1.0));
        far.alive = true;
        world.hosts.insert("Z".into(), far);
        world.routing.insert("Z".into(), Default::default());
        routing::settle(&mut world, 4);
        let err = world
            .send_platform(&"A".into(), &"Z".into(), Priority::Normal, report_message())
            .unwrap_err();
        assert!(matches!(err, Error::NoRoute { .. }));
    }

    #[test]
    fn nothing_is_delivered_to_a_dead_host() {
        let mut world = line_world(&[("A", HostClass::Light), ("B", HostClass::Light)]);
        routing::settle(&mut world, 4);
        world
            .send_platform(&"A".into(), &"B".into(), Priority::Normal, report_message())
            .unwrap();
        world.kill_host(&"B".into(), "test");
        world.clock.tick += 1;
        world.deliver_transit();
        assert!(world
            .inboxes
            .get(&"B".into())
            .map(|q| q.is_empty())
            .unwrap_or(true));
        assert_eq!(world.hosts[&"B".into()].ledger.consumed_rx, 0);
    }
}
