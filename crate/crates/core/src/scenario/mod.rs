//! Scenario files: a single UTF-8 JSON document describing the world,
//! the component repository, the configuration families and the scripted
//! events. Unknown keys are rejected everywhere; a typo that silently
//! changed an experiment would be worse than a parse error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ids::{AppId, CmId, FlowId, HostId, PeId};
use crate::model::descriptor::BusinessComponentDescriptor;
use crate::params::{Footprints, SimParams};
use crate::qos::graph::ConfigurationFamily;
use crate::world::HostClass;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSpec {
    pub alpha: Option<u64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub hello_miss_k: Option<u32>,
    pub mailbox_capacity: Option<usize>,
    pub default_frame_bytes: Option<u64>,
    pub control_bytes: Option<u64>,
    pub seed: Option<u64>,
    pub footprints: Option<Footprints>,
}

impl ParamsSpec {
    pub fn resolve(&self) -> Result<SimParams> {
        let defaults = SimParams::default();
        for (name, value) in [("beta", self.beta), ("gamma", self.gamma)] {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidValue(format!(
                        "param `{name}` must be finite and >= 0"
                    )));
                }
            }
        }
        Ok(SimParams {
            alpha: self.alpha.unwrap_or(defaults.alpha),
            beta_millis: self
                .beta
                .map(|b| (b * 1000.0).round() as u64)
                .unwrap_or(defaults.beta_millis),
            gamma_millis: self
                .gamma
                .map(|g| (g * 1000.0).round() as u64)
                .unwrap_or(defaults.gamma_millis),
            hello_miss_limit: self
                .hello_miss_k
                .unwrap_or(defaults.hello_miss_limit)
                .max(1),
            mailbox_capacity: self
                .mailbox_capacity
                .unwrap_or(defaults.mailbox_capacity)
                .max(1),
            default_frame_bytes: self
                .default_frame_bytes
                .unwrap_or(defaults.default_frame_bytes),
            control_bytes: self.control_bytes.unwrap_or(defaults.control_bytes),
            footprints: self.footprints.unwrap_or(defaults.footprints),
            seed: self.seed.unwrap_or(defaults.seed),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSpec {
    pub id: HostId,
    pub class: HostClass,
    pub position: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<i64>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub capabilities: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub package: BTreeSet<CmId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventAction {
    FailLink {
        a: HostId,
        b: HostId,
    },
    FailHost {
        host: HostId,
    },
    RestoreHost {
        host: HostId,
    },
    RestoreLink {
        a: HostId,
        b: HostId,
    },
    MoveHost {
        host: HostId,
        position: (f64, f64),
    },
    DrainBattery {
        host: HostId,
        amount: u64,
    },
    InjectFrame {
        pe: PeId,
        flow: FlowId,
        bytes: Option<u64>,
    },
    SetParam {
        key: String,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub tick: u64,
    pub action: EventAction,
}

/// Scenario events are flat JSON objects (`{"tick":50,"kind":"fail_host",
/// "host":"S1"}`), so (de)serialization is spelled out by hand: it keeps
/// the format friendly while still rejecting unknown keys.
impl Serialize for ScenarioEvent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("tick", &self.tick)?;
        match &self.action {
            EventAction::FailLink { a, b } => {
                map.serialize_entry("kind", "fail_link")?;
                map.serialize_entry("a", a)?;
                map.serialize_entry("b", b)?;
            }
            EventAction::FailHost { host } => {
                map.serialize_entry("kind", "fail_host")?;
                map.serialize_entry("host", host)?;
            }
            EventAction::RestoreHost { host } => {
                map.serialize_entry("kind", "restore")?;
                map.serialize_entry("host", host)?;
            }
            EventAction::RestoreLink { a, b } => {
                map.serialize_entry("kind", "restore")?;
                map.serialize_entry("a", a)?;
                map.serialize_entry("b", b)?;
            }
            EventAction::MoveHost { host, position } => {
                map.serialize_entry("kind", "move_host")?;
                map.serialize_entry("host", host)?;
                map.serialize_entry("position", position)?;
            }
            EventAction::DrainBattery { host, amount } => {
                map.serialize_entry("kind", "drain_battery")?;
                map.serialize_entry("host", host)?;
                map.serialize_entry("amount", amount)?;
            }
            EventAction::InjectFrame { pe, flow, bytes } => {
                map.serialize_entry("kind", "inject_frame")?;
                map.serialize_entry("pe", pe)?;
                map.serialize_entry("flow", flow)?;
                if let Some(bytes) = bytes {
                    map.serialize_entry("bytes", bytes)?;
                }
            }
            EventAction::SetParam { key, value } => {
                map.serialize_entry("kind", "set_param")?;
                map.serialize_entry("key", key)?;
                map.serialize_entry("value", value)?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ScenarioEvent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EventVisitor;

        impl<'de> Visitor<'de> for EventVisitor {
            type Value = ScenarioEvent;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a scenario event object")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut fields: BTreeMap<String, serde_json::Value> = BTreeMap::new();
                while let Some((key, value)) = access.next_entry::<String, serde_json::Value>()? {
                    if fields.insert(key.clone(), value).is_some() {
                        return Err(de::Error::custom(format!("duplicate key `{key}`")));
                    }
                }
                parse_event(fields).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_map(EventVisitor)
    }
}

fn parse_event(
    mut fields: BTreeMap<String, serde_json::Value>,
) -> std::result::Result<ScenarioEvent, String> {
    let tick = fields
        .remove("tick")
        .ok_or("event is missing `tick`")?
        .as_u64()
        .ok_or("`tick` must be a non-negative integer")?;
    let kind = fields
        .remove("kind")
        .ok_or("event is missing `kind`")?
        .as_str()
        .ok_or("`kind` must be a string")?
        .to_owned();
    let restore_names_host = fields.contains_key("host");

    let mut take_str = |key: &str| -> std::result::Result<String, String> {
        fields
            .remove(key)
            .ok_or(format!("`{kind}` event is missing `{key}`"))?
            .as_str()
            .map(str::to_owned)
            .ok_or(format!("`{key}` must be a string"))
    };

    let action = match kind.as_str() {
        "fail_link" => EventAction::FailLink {
            a: take_str("a")?.into(),
            b: take_str("b")?.into(),
        },
        "fail_host" => EventAction::FailHost {
            host: take_str("host")?.into(),
        },
        "restore" => {
            if restore_names_host {
                EventAction::RestoreHost {
                    host: take_str("host")?.into(),
                }
            } else {
                EventAction::RestoreLink {
                    a: take_str("a")?.into(),
                    b: take_str("b")?.into(),
                }
            }
        }
        "move_host" => {
            let host = take_str("host")?.into();
            let position = fields
                .remove("position")
                .ok_or("`move_host` event is missing `position`")?;
            let position: (f64, f64) =
                serde_json::from_value(position).map_err(|e| format!("bad `position`: {e}"))?;
            EventAction::MoveHost { host, position }
        }
        "drain_battery" => {
            let host = take_str("host")?.into();
            let amount = fields
                .remove("amount")
                .ok_or("`drain_battery` event is missing `amount`")?
                .as_u64()
                .ok_or("`amount` must be a non-negative integer")?;
            EventAction::DrainBattery { host, amount }
        }
        "inject_frame" => {
            let pe = take_str("pe")?.into();
            let flow = take_str("flow")?.into();
            let bytes = match fields.remove("bytes") {
                Some(v) => Some(v.as_u64().ok_or("`bytes` must be a non-negative integer")?),
                None => None,
            };
            EventAction::InjectFrame { pe, flow, bytes }
        }
        "set_param" => {
            let key = take_str("key")?;
            let value = fields
                .remove("value")
                .ok_or("`set_param` event is missing `value`")?
                .as_f64()
                .ok_or("`value` must be a number")?;
            EventAction::SetParam { key, value }
        }
        other => return Err(format!("unknown event kind `{other}`")),
    };

    if let Some(extra) = fields.keys().next() {
        return Err(format!("unknown key `{extra}` in `{kind}` event"));
    }
    Ok(ScenarioEvent { tick, action })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub params: ParamsSpec,
    pub hosts: Vec<HostSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<(HostId, HostId)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repository: Vec<BusinessComponentDescriptor>,
    pub applications: Vec<ConfigurationFamily>,
    pub initial_application: AppId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<ScenarioEvent>,
}

impl ScenarioSpec {
    pub fn sim_params(&self) -> Result<SimParams> {
        self.params.resolve()
    }

    pub fn host(&self, id: &HostId) -> Option<&HostSpec> {
        self.hosts.iter().find(|h| &h.id == id)
    }

    /// Full semantic validation plus default resolution (edge flows).
    pub fn validate(&mut self) -> Result<()> {
        self.sim_params()?;

        let mut host_ids = BTreeSet::new();
        for host in &self.hosts {
            if !host_ids.insert(host.id.clone()) {
                return Err(Error::InvalidValue(format!(
                    "host `{}` declared twice",
                    host.id
                )));
            }
            if let Some(memory) = host.memory {
                if memory < 0 {
                    return Err(Error::InvalidValue(format!(
                        "host `{}`: negative memory",
                        host.id
                    )));
                }
            }
            if let Some(battery) = host.battery {
                if battery < 0 {
                    return Err(Error::InvalidValue(format!(
                        "host `{}`: negative battery",
                        host.id
                    )));
                }
            }
            if let Some(range) = host.radio_range {
                if !range.is_finite() || range < 0.0 {
                    return Err(Error::InvalidValue(format!(
                        "host `{}`: bad radio range",
                        host.id
                    )));
                }
            }
            match host.class {
                HostClass::Sensor => {
                    if host.package.is_empty() {
                        return Err(Error::InvalidValue(format!(
                            "sensor host `{}` must preload a non-empty package",
                            host.id
                        )));
                    }
                }
                HostClass::Fixed | HostClass::Light => {
                    if !host.package.is_empty() {
                        return Err(Error::InvalidValue(format!(
                            "host `{}` is not a sensor and cannot preload a package",
                            host.id
                        )));
                    }
                }
            }
        }

        let mut cm_ids = BTreeSet::new();
        for descriptor in &self.repository {
            if !cm_ids.insert(descriptor.id.clone()) {
                return Err(Error::InvalidValue(format!(
                    "descriptor `{}` declared twice",
                    descriptor.id
                )));
            }
            descriptor.validate()?;
        }
        let repo: BTreeMap<CmId, BusinessComponentDescriptor> = self
            .repository
            .iter()
            .map(|d| (d.id.clone(), d.clone()))
            .collect();

        for host in &self.hosts {
            for cm in &host.package {
                if !repo.contains_key(cm) {
                    return Err(Error::DanglingReference {
                        kind: "descriptor",
                        id: cm.to_string(),
                    });
                }
            }
        }

        for (a, b) in &self.links {
            for end in [a, b] {
                if !host_ids.contains(end) {
                    return Err(Error::DanglingReference {
                        kind: "host",
                        id: end.to_string(),
                    });
                }
            }
            if a == b {
                return Err(Error::InvalidValue(format!(
                    "link `{a}` <-> `{b}` is a self-loop"
                )));
            }
        }

        let mut app_ids = BTreeSet::new();
        if self.applications.is_empty() {
            return Err(Error::InvalidValue(
                "scenario declares no applications".into(),
            ));
        }
        let lookup = |cm: &CmId| repo.get(cm).cloned();
        for family in &mut self.applications {
            if !app_ids.insert(family.app.clone()) {
                return Err(Error::InvalidValue(format!(
                    "application `{}` declares more than one family",
                    family.app
                )));
            }
            let supervisor = family.supervisor.clone();
            match self.hosts.iter().find(|h| h.id == supervisor) {
                None => {
                    return Err(Error::DanglingReference {
                        kind: "host",
                        id: supervisor.to_string(),
                    })
                }
                Some(h) if h.class != HostClass::Fixed => {
                    return Err(Error::InvalidValue(format!(
                        "supervisor host `{supervisor}` must be a fixed host"
                    )));
                }
                Some(_) => {}
            }
            // Resolve defaulted edge flows before structural validation.
            for config in &mut family.configurations {
                let nodes = config.nodes.clone();
                for edge in &mut config.edges {
                    if !edge.flows.is_empty() {
                        continue;
                    }
                    let from = nodes.iter().find(|n| n.id == edge.from).ok_or(
                        Error::DanglingReference {
                            kind: "node",
                            id: edge.from.to_string(),
                        },
                    )?;
                    let to =
                        nodes
                            .iter()
                            .find(|n| n.id == edge.to)
                            .ok_or(Error::DanglingReference {
                                kind: "node",
                                id: edge.to.to_string(),
                            })?;
                    let src = repo.get(&from.cm).ok_or(Error::DanglingReference {
                        kind: "descriptor",
                        id: from.cm.to_string(),
                    })?;
                    let dst = repo.get(&to.cm).ok_or(Error::DanglingReference {
                        kind: "descriptor",
                        id: to.cm.to_string(),
                    })?;
                    let candidates: Vec<Vec<FlowId>> = src
                        .output_flows
                        .iter()
                        .map(|p| p.flows())
                        .filter(|flows| {
                            let set: BTreeSet<_> = flows.iter().cloned().collect();
                            dst.input_flows
                                .iter()
                                .any(|p| p.flows().into_iter().collect::<BTreeSet<_>>() == set)
                        })
                        .collect();
                    match candidates.len() {
                        1 => edge.flows = candidates.into_iter().next().unwrap(),
                        0 => {
                            return Err(Error::InvalidValue(format!(
                                "configuration `{}`: no compatible port pair for edge `{}` -> `{}`",
                                config.id, edge.from, edge.to
                            )));
                        }
                        _ => {
                            return Err(Error::InvalidValue(format!(
                                "configuration `{}`: edge `{}` -> `{}` is ambiguous, declare flows explicitly",
                                config.id, edge.from, edge.to
                            )));
                        }
                    }
                }
            }
            family.validate(&lookup)?;
            for config in &family.configurations {
                for node in &config.nodes {
                    if let crate::qos::graph::HostBinding::Host(host) = &node.bind {
                        if !host_ids.contains(host) {
                            return Err(Error::DanglingReference {
                                kind: "host",
                                id: host.to_string(),
                            });
                        }
                    }
                }
            }
        }
        if !app_ids.contains(&self.initial_application) {
            return Err(Error::DanglingReference {
                kind: "application",
                id: self.initial_application.to_string(),
            });
        }

        const PARAM_KEYS: [&str; 7] = [
            "alpha",
            "beta",
            "gamma",
            "hello_miss_k",
            "mailbox_capacity",
            "default_frame_bytes",
            "control_bytes",
        ];
        for event in &self.events {
            match &event.action {
                EventAction::FailLink { a, b } | EventAction::RestoreLink { a, b } => {
                    for end in [a, b] {
                        if !host_ids.contains(end) {
                            return Err(Error::DanglingReference {
                                kind: "host",
                                id: end.to_string(),
                            });
                        }
                    }
                }
                EventAction::FailHost { host }
                | EventAction::RestoreHost { host }
                | EventAction::MoveHost { host, .. }
                | EventAction::DrainBattery { host, .. } => {
                    if !host_ids.contains(host) {
                        return Err(Error::DanglingReference {
                            kind: "host",
                            id: host.to_string(),
                        });
                    }
                }
                EventAction::InjectFrame { .. } => {}
                EventAction::SetParam { key, value } => {
                    if !PARAM_KEYS.contains(&key.as_str()) {
                        return Err(Error::InvalidValue(format!(
                            "set_param: unknown key `{key}`"
                        )));
                    }
                    if !value.is_finite() || *value < 0.0 {
                        return Err(Error::InvalidValue(format!("set_param `{key}`: bad value")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let mut spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

/// Load a scenario from disk.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "hosts": [{"id": "F1", "class": "fixed", "position": [0, 0]}],
        "repository": [
            {"id": "mon", "style": "event", "inputs": [], "outputs": ["beat"],
             "memory": 2, "cpu": 1, "category": "software"}
        ],
        "applications": [{
            "application": "app",
            "supervisor": "F1",
            "configurations": [{
                "id": "only",
                "qos_level": 1,
                "nodes": [{"id": "m", "cm": "mon", "bind": {"host": "F1"}}]
            }]
        }],
        "initial_application": "app"
    }"#;

    #[test]
    fn minimal_scenario_is_valid() {
        let spec = parse_scenario(MINIMAL).unwrap();
        assert_eq!(spec.hosts.len(), 1);
        assert_eq!(spec.applications[0].configurations.len(), 1);
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let text = MINIMAL.replacen("\"hosts\"", "\"extra\": 1, \"hosts\"", 1);
        assert!(matches!(parse_scenario(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_event_key_is_rejected() {
        let mut spec: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        spec["events"] =
            serde_json::json!([{"tick": 1, "kind": "fail_host", "host": "F1", "bogus": 2}]);
        let text = spec.to_string();
        assert!(matches!(parse_scenario(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn event_referencing_unknown_host_is_dangling() {
        let mut spec: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        spec["events"] = serde_json::json!([{"tick": 1, "kind": "fail_host", "host": "S9"}]);
        let err = parse_scenario(&spec.to_string()).unwrap_err();
        match err {
            Error::DanglingReference { id, .. } => assert_eq!(id, "S9"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn negative_battery_is_invalid_value() {
        let mut spec: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        spec["hosts"][0]["battery"] = serde_json::json!(-5);
        assert!(matches!(
            parse_scenario(&spec.to_string()),
            Err(Error::InvalidValue(_))
        ));
    }

    #[test]
    fn sensor_hosts_need_packages_and_others_must_not_have_them() {
        let mut spec: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        spec["hosts"][0]["package"] = serde_json::json!(["mon"]);
        assert!(parse_scenario(&spec.to_string()).is_err());

        let mut spec: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        spec["hosts"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!({"id": "S1", "class": "sensor", "position": [1, 1], "radio_range": 5}));
        assert!(parse_scenario(&spec.to_string()).is_err());
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let spec = parse_scenario(MINIMAL).unwrap();
        let json = spec.to_json();
        let reloaded = parse_scenario(&json).unwrap();
        assert_eq!(spec, reloaded);
        assert_eq!(reloaded.to_json(), json);
    }

    #[test]
    fn event_round_trip_keeps_shape() {
        let event = ScenarioEvent {
            tick: 50,
            action: EventAction::MoveHost {
                host: "L1".into(),
                position: (3.0, 4.0),
            },
        };
        let json = serde_json::to_string(&event).unwrap();
        let back: ScenarioEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(event, back);
    }
}
