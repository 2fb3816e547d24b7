//! Offline statistics over a run log: energy breakdown, reconfiguration
//! latency, frame losses and the configuration timeline.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::log::{parse_log, EventLogRecord, LogKind};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsReport {
    pub ticks: u64,
    /// host -> (tx, rx, cpu) from the final tick marker.
    pub energy: BTreeMap<String, (u64, u64, u64)>,
    pub battery: BTreeMap<String, String>,
    /// latency in ticks (trigger to completion) -> occurrences.
    pub reconfiguration_latency: BTreeMap<u64, u64>,
    pub reconfigurations: u64,
    pub failed_reconfigurations: u64,
    pub frames_delivered: u64,
    pub frames_dropped: u64,
    pub backpressure_events: u64,
    /// (tick, application, configuration) in completion order.
    pub timeline: Vec<(u64, String, String)>,
}

pub fn stats_from_text(text: &str) -> Result<StatsReport> {
    Ok(stats_from_records(&parse_log(text)?))
}

pub fn stats_from_records(records: &[EventLogRecord]) -> StatsReport {
    let mut report = StatsReport::default();
    for record in records {
        match record.kind {
            LogKind::TickMarker => {
                report.ticks = report.ticks.max(record.tick + 1);
                for (key, value) in &record.details {
                    if let Some(host) = key.strip_prefix("tx:") {
                        report.energy.entry(host.to_owned()).or_default().0 =
                            value.parse().unwrap_or(0);
                    } else if let Some(host) = key.strip_prefix("rx:") {
                        report.energy.entry(host.to_owned()).or_default().1 =
                            value.parse().unwrap_or(0);
                    } else if let Some(host) = key.strip_prefix("cpu:") {
                        report.energy.entry(host.to_owned()).or_default().2 =
                            value.parse().unwrap_or(0);
                    } else if let Some(host) = key.strip_prefix("battery:") {
                        report.battery.insert(host.to_owned(), value.clone());
                    }
                }
            }
            LogKind::FrameDelivered => report.frames_delivered += 1,
            LogKind::FrameDropped => report.frames_dropped += 1,
            LogKind::Backpressure => {
                report.backpressure_events += 1;
                report.frames_dropped += 1;
            }
            LogKind::ReconfigurationComplete => {
                let config = record.detail("config").unwrap_or("?").to_owned();
                let app = record.detail("app").unwrap_or("?").to_owned();
                report.timeline.push((record.tick, app, config));
                if record.detail("trigger") != Some("initial") {
                    report.reconfigurations += 1;
                }
                if let Some(trigger_tick) = record
                    .detail("trigger_tick")
                    .and_then(|t| t.parse::<u64>().ok())
                {
                    let latency = record.tick.saturating_sub(trigger_tick);
                    *report.reconfiguration_latency.entry(latency).or_insert(0) += 1;
                }
            }
            LogKind::ReconfigurationFailed => report.failed_reconfigurations += 1,
            _ => {}
        }
    }
    report
}

pub fn render(report: &StatsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("ticks: {}\n", report.ticks));

    out.push_str("energy per host (tx/rx/cpu, battery):\n");
    if report.energy.is_empty() {
        out.push_str("  (no energy totals in log)\n");
    }
    for (host, (tx, rx, cpu)) in &report.energy {
        let battery = report.battery.get(host).map(String::as_str).unwrap_or("?");
        out.push_str(&format!("  {host}: {tx}/{rx}/{cpu}, {battery}\n"));
    }

    out.push_str(&format!(
        "reconfigurations: {} complete, {} failed\n",
        report.reconfigurations, report.failed_reconfigurations
    ));
    out.push_str("reconfiguration latency histogram (ticks -> count):\n");
    if report.reconfiguration_latency.is_empty() {
        out.push_str("  (none)\n");
    }
    for (latency, count) in &report.reconfiguration_latency {
        out.push_str(&format!("  {latency}: {count}\n"));
    }

    out.push_str(&format!(
        "frames: delivered {}, dropped {} (backpressure {})\n",
        report.frames_delivered, report.frames_dropped, report.backpressure_events
    ));

    out.push_str("configuration timeline:\n");
    if report.timeline.is_empty() {
        out.push_str("  (no deployments)\n");
    }
    for (tick, app, config) in &report.timeline {
        out.push_str(&format!("  tick {tick}: {app} -> {config}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    fn record(tick: u64, seq: u64, kind: LogKind, details: &[(&str, &str)]) -> EventLogRecord {
        EventLogRecord {
            tick,
            seq,
            kind,
            host: String::new(),
            details: details
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<Map<_, _>>(),
        }
    }

    #[test]
    fn empty_log_yields_zero_counters() {
        let report = stats_from_text("").unwrap();
        assert_eq!(report, StatsReport::default());
    }

    #[test]
    fn one_three_tick_reconfiguration_lands_in_bucket_three() {
        let records = vec![
            record(50, 0, LogKind::RouteAlert, &[]),
            record(
                53,
                1,
                LogKind::ReconfigurationComplete,
                &[
                    ("app", "a"),
                    ("config", "c2"),
                    ("trigger", "route_alert"),
                    ("trigger_tick", "50"),
                ],
            ),
        ];
        let report = stats_from_records(&records);
        assert_eq!(
            report.reconfiguration_latency,
            [(3, 1)].into_iter().collect()
        );
        assert_eq!(report.reconfigurations, 1);
        assert_eq!(report.timeline, vec![(53, "a".to_owned(), "c2".to_owned())]);
    }

    #[test]
    fn dropped_frames_and_backpressure_are_counted() {
        let records = vec![
            record(
                1,
                0,
                LogKind::FrameDropped,
                &[("reason", "conduit_destroyed")],
            ),
            record(
                1,
                1,
                LogKind::FrameDropped,
                &[("reason", "conduit_destroyed")],
            ),
            record(2, 2, LogKind::Backpressure, &[]),
            record(3, 3, LogKind::FrameDelivered, &[]),
        ];
        let report = stats_from_records(&records);
        assert_eq!(report.frames_dropped, 3);
        assert_eq!(report.backpressure_events, 1);
        assert_eq!(report.frames_delivered, 1);
    }
}
