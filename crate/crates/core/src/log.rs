//! The replayable event log: one JSON record per line, strictly ordered
//! by (tick, seq). Byte-identical logs for identical (scenario, seed)
//! pairs are a hard requirement, so details use an ordered map and all
//! values are plain strings.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogKind {
    // Platform protocol records.
    #[serde(rename = "STATE_REPORT")]
    StateReport,
    #[serde(rename = "COMMAND")]
    Command,
    #[serde(rename = "CREATE_CONTAINER")]
    CreateContainer,
    #[serde(rename = "DESTROY_CONTAINER")]
    DestroyContainer,
    #[serde(rename = "CREATE_CONDUIT")]
    CreateConduit,
    #[serde(rename = "DESTROY_CONDUIT")]
    DestroyConduit,
    #[serde(rename = "ROUTE_ALERT")]
    RouteAlert,
    #[serde(rename = "ROUTE_INFO")]
    RouteInfo,
    #[serde(rename = "MIGRATE_UC")]
    MigrateUc,
    // Simulation records.
    #[serde(rename = "tick_marker")]
    TickMarker,
    #[serde(rename = "frame_delivered")]
    FrameDelivered,
    #[serde(rename = "frame_dropped")]
    FrameDropped,
    #[serde(rename = "host_died")]
    HostDied,
    #[serde(rename = "reconfiguration_complete")]
    ReconfigurationComplete,
    #[serde(rename = "reconfiguration_failed")]
    ReconfigurationFailed,
    #[serde(rename = "backpressure")]
    Backpressure,
}

impl fmt::Display for LogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).unwrap();
        f.write_str(s.trim_matches('"'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLogRecord {
    pub tick: u64,
    pub seq: u64,
    pub kind: LogKind,
    /// The host the record concerns; empty for world-level records.
    pub host: String,
    pub details: BTreeMap<String, String>,
}

impl EventLogRecord {
    pub fn detail(&self, key: &str) -> Option<&str> {
        self.details.get(key).map(String::as_str)
    }
}

/// Serializes records as JSON Lines into any writer, flushing per tick.
pub struct LogWriter<W: Write> {
    out: W,
    pub records: Vec<EventLogRecord>,
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            records: Vec::new(),
        }
    }

    pub fn append(&mut self, record: EventLogRecord) -> Result<()> {
        let line = serde_json::to_string(&record).map_err(|e| Error::Io(e.to_string()))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.records.push(record);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Parse a JSON Lines log back into records, checking ordering.
pub fn parse_log(text: &str) -> Result<Vec<EventLogRecord>> {
    let mut records = Vec::new();
    let mut last: Option<(u64, u64)> = None;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EventLogRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedLog {
                line: idx + 1,
                message: e.to_string(),
            })?;
        let key = (record.tick, record.seq);
        if let Some(prev) = last {
            if key <= prev {
                return Err(Error::MalformedLog {
                    line: idx + 1,
                    message: format!("records out of order: {:?} after {:?}", key, prev),
                });
            }
        }
        last = Some(key);
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(tick: u64, seq: u64) -> EventLogRecord {
        EventLogRecord {
            tick,
            seq,
            kind: LogKind::TickMarker,
            host: String::new(),
            details: BTreeMap::new(),
        }
    }

    #[test]
    fn round_trip_preserves_records() {
        let mut writer = LogWriter::new(Vec::new());
        writer.append(record(0, 0)).unwrap();
        writer.append(record(0, 3)).unwrap();
        writer.append(record(1, 4)).unwrap();
        let text = String::from_utf8(writer.out).unwrap();
        let parsed = parse_log(&text).unwrap();
        assert_eq!(parsed, writer.records);
    }

    #[test]
    fn out_of_order_logs_are_rejected() {
        let mut writer = LogWriter::new(Vec::new());
        writer.append(record(1, 5)).unwrap();
        writer.append(record(1, 6)).unwrap();
        let mut text = String::from_utf8(writer.out).unwrap();
        text.push_str(
            "{\"tick\":0,\"seq\":0,\"kind\":\"tick_marker\",\"host\":\"\",\"details\":{}}\n",
        );
        assert!(matches!(parse_log(&text), Err(Error::MalformedLog { .. })));
    }

    #[test]
    fn garbage_line_is_malformed() {
        assert!(matches!(
            parse_log("not json"),
            Err(Error::MalformedLog { line: 1, .. })
        ));
    }

    #[test]
    fn kind_display_matches_wire_name() {
        assert_eq!(LogKind::RouteAlert.to_string(), "ROUTE_ALERT");
        assert_eq!(LogKind::TickMarker.to_string(), "tick_marker");
    }
}
