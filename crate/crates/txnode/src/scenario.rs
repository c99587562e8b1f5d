//! Physical-environment signal generation, node placements, hot-plug scripts,
//! and the built-in six-node home deployment.
//!
//! Channel generators are pure functions of `(time, seed)`: sampling the same
//! channel at the same time with the same seed always yields the same values.
//! Shapes are synthetic (triangular diurnal curves, scheduled windows,
//! occupancy intervals, event bursts) and exist to give the heatmap plausible
//! bands, not to match any recorded trace.

use crate::radio::RadioParams;
use crate::registry::{self, TransducerKind};
use crate::util::{fnv1a64, point_hash};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const SCENARIO_VERSION: u32 = 1;

pub const MS_PER_HOUR: u64 = 3_600_000;
pub const MS_PER_MINUTE: u64 = 60_000;
pub const MS_PER_DAY: u64 = 86_400_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario at {path}: {detail}")]
    Validation { path: String, detail: String },
    #[error("unknown channel '{0}'")]
    UnknownChannel(String),
}

fn invalid(path: impl Into<String>, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { path: path.into(), detail: detail.into() }
}

/// Base waveform of a channel. All arithmetic is integer so traces are
/// bit-stable across platforms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Triangular daily wave peaking at `peak_hour`.
    Diurnal { base: i32, amplitude: i32, peak_hour: u8 },
    /// `high` during the listed `[start, end)` hour windows, `low` otherwise.
    Windows { low: i32, high: i32, hours: Vec<(u8, u8)> },
    /// `level` during the listed `[start, end)` minute-of-day intervals,
    /// exactly zero otherwise (so rule engines can rely on zero readings).
    Occupancy { minutes: Vec<(u16, u16)>, level: i32 },
    /// `rest` plus `magnitude` during the listed event minutes.
    Burst { rest: i32, event_minutes: Vec<u16>, magnitude: i32 },
    Constant { value: i32 },
    /// Pure jitter around a base value; the channel's noise amplitude does
    /// all the work.
    Noise { base: i32 },
}

impl Generator {
    /// Base value at `t`, plus whether noise applies at this instant.
    fn value_at(&self, t_ms: u64) -> (i32, bool) {
        let in_day = t_ms % MS_PER_DAY;
        match self {
            Generator::Diurnal { base, amplitude, peak_hour } => {
                let peak = u64::from(*peak_hour) * MS_PER_HOUR;
                let raw = in_day.abs_diff(peak);
                let dist = raw.min(MS_PER_DAY - raw) as i64; // 0..=12h
                let half_day = (MS_PER_DAY / 2) as i64;
                let scaled = i64::from(*amplitude) * (half_day - 2 * dist) / half_day;
                (base + scaled as i32, true)
            }
            Generator::Windows { low, high, hours } => {
                let hour = (in_day / MS_PER_HOUR) as u8;
                let inside = hours.iter().any(|&(s, e)| hour >= s && hour < e);
                (if inside { *high } else { *low }, true)
            }
            Generator::Occupancy { minutes, level } => {
                let minute = (in_day / MS_PER_MINUTE) as u16;
                let inside = minutes.iter().any(|&(s, e)| minute >= s && minute < e);
                if inside {
                    (*level, true)
                } else {
                    (0, false)
                }
            }
            Generator::Burst { rest, event_minutes, magnitude } => {
                let minute = (in_day / MS_PER_MINUTE) as u16;
                let active = event_minutes.contains(&minute);
                (if active { rest + magnitude } else { *rest }, true)
            }
            Generator::Constant { value } => (*value, true),
            Generator::Noise { base } => (*base, true),
        }
    }
}

/// A named environment signal: base generator plus seeded jitter amplitude.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub generator: Generator,
    #[serde(default)]
    pub noise_amp: u16,
}

/// One transducer slot on a node. Sensors carry the channel they observe;
/// actuators carry none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransducerBinding {
    pub id: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: u16,
    pub transducers: Vec<TransducerBinding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HotPlugAction {
    Attach,
    Detach,
}

/// A scripted mid-run plug event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HotPlugSpec {
    pub t_ms: u64,
    pub node_id: u16,
    pub action: HotPlugAction,
    pub id: u8,
    /// Required when attaching a sensor that has no static binding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
}

/// Server-side sit-rule binding: watch this pressure sensor, buzz that
/// actuator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SitRuleBinding {
    pub pressure_id: u8,
    pub actuator_id: u8,
}

/// A full deployment description: nodes, channel generators, hot-plug script,
/// rules, and run defaults. Immutable after load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub seed: u64,
    pub horizon_ms: u64,
    pub nodes: Vec<NodeSpec>,
    pub channels: BTreeMap<String, ChannelSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hotplug: Vec<HotPlugSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<SitRuleBinding>,
    /// Optional radio override; when absent the energy profile's radio is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio: Option<RadioParams>,
}

impl Scenario {
    /// Deterministic value of a channel at `t`, `axes` values wide. Values are
    /// pre-clamp: the bus saturates them to the sensor's raw range later.
    pub fn sample_channel(
        &self,
        channel_id: &str,
        t_ms: u64,
        seed: u64,
        axes: u8,
    ) -> Result<Vec<i32>, ScenarioError> {
        let spec = self
            .channels
            .get(channel_id)
            .ok_or_else(|| ScenarioError::UnknownChannel(channel_id.to_string()))?;
        let (base, noisy) = spec.generator.value_at(t_ms);
        let label = fnv1a64(channel_id);
        let amp = i64::from(spec.noise_amp);
        let mut out = Vec::with_capacity(axes as usize);
        for axis in 0..axes {
            let mut v = i64::from(base);
            if noisy && amp > 0 {
                let h = point_hash(seed, label, t_ms, u64::from(axis));
                v += (h % (2 * amp as u64 + 1)) as i64 - amp;
            }
            out.push(v.clamp(i64::from(i32::MIN), i64::from(i32::MAX)) as i32);
        }
        Ok(out)
    }

    /// Total number of statically laid out transducers.
    pub fn static_transducer_count(&self) -> usize {
        self.nodes.iter().map(|n| n.transducers.len()).sum()
    }

    /// Channel bound to a transducer, statically or by a hot-plug attach.
    pub fn channel_for(&self, raw_id: u8) -> Option<&str> {
        for node in &self.nodes {
            for t in &node.transducers {
                if t.id == raw_id {
                    return t.channel.as_deref();
                }
            }
        }
        self.hotplug
            .iter()
            .find(|h| h.id == raw_id && h.channel.is_some())
            .and_then(|h| h.channel.as_deref())
    }

    /// The node hosting a transducer (statically or via the script).
    pub fn host_node(&self, raw_id: u8) -> Option<u16> {
        for node in &self.nodes {
            if node.transducers.iter().any(|t| t.id == raw_id) {
                return Some(node.node_id);
            }
        }
        self.hotplug.iter().find(|h| h.id == raw_id).map(|h| h.node_id)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("scenario serialization");
        out.push(b'\n');
        out
    }

    /// Full validation: registry ids, global uniqueness, binding totality,
    /// script consistency, rule references.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCENARIO_VERSION {
            return Err(invalid("version", format!("unsupported version {}", self.version)));
        }
        if self.nodes.is_empty() {
            return Err(invalid("nodes", "scenario has no nodes"));
        }
        let mut node_ids = BTreeSet::new();
        let mut owner: BTreeMap<u8, u16> = BTreeMap::new();
        for (ni, node) in self.nodes.iter().enumerate() {
            let path = format!("nodes[{ni}]");
            if node.node_id == 0 {
                return Err(invalid(format!("{path}.node_id"), "node ids start at 1"));
            }
            if !node_ids.insert(node.node_id) {
                return Err(invalid(
                    format!("{path}.node_id"),
                    format!("duplicate node id {}", node.node_id),
                ));
            }
            for (ti, t) in node.transducers.iter().enumerate() {
                let tpath = format!("{path}.transducers[{ti}]");
                let kind = registry::kind_for_id(t.id)
                    .map_err(|e| invalid(format!("{tpath}.id"), e.to_string()))?;
                if let Some(prev) = owner.insert(t.id, node.node_id) {
                    return Err(invalid(
                        format!("{tpath}.id"),
                        format!("transducer {} already placed on node {prev}", t.id),
                    ));
                }
                let is_actuator = registry::spec_for_kind(kind).is_actuator;
                match (&t.channel, is_actuator) {
                    (None, false) => {
                        return Err(invalid(
                            format!("{tpath}.channel"),
                            format!("sensor {} has no channel binding", t.id),
                        ))
                    }
                    (Some(_), true) => {
                        return Err(invalid(
                            format!("{tpath}.channel"),
                            format!("actuator {} cannot observe a channel", t.id),
                        ))
                    }
                    _ => {}
                }
                if let Some(ch) = &t.channel {
                    if !self.channels.contains_key(ch) {
                        return Err(invalid(
                            format!("{tpath}.channel"),
                            format!("sensor {} bound to missing channel '{ch}'", t.id),
                        ));
                    }
                }
            }
        }

        // Hot-plug script: valid ids, known nodes, alternation from the
        // static state, channel totality for scripted sensors.
        let mut plugged: BTreeMap<u8, bool> =
            owner.keys().map(|&id| (id, true)).collect();
        let mut script: Vec<(usize, &HotPlugSpec)> = self.hotplug.iter().enumerate().collect();
        script.sort_by_key(|(i, h)| (h.t_ms, h.node_id, h.id, *i));
        for (hi, h) in script {
            let path = format!("hotplug[{hi}]");
            let kind = registry::kind_for_id(h.id)
                .map_err(|e| invalid(format!("{path}.id"), e.to_string()))?;
            if !node_ids.contains(&h.node_id) {
                return Err(invalid(
                    format!("{path}.node_id"),
                    format!("unknown node {}", h.node_id),
                ));
            }
            if let Some(static_owner) = owner.get(&h.id) {
                if *static_owner != h.node_id {
                    return Err(invalid(
                        format!("{path}.id"),
                        format!("transducer {} belongs to node {static_owner}", h.id),
                    ));
                }
            }
            let attached = plugged.entry(h.id).or_insert(false);
            match h.action {
                HotPlugAction::Attach if *attached => {
                    return Err(invalid(
                        format!("{path}.action"),
                        format!("transducer {} is already attached", h.id),
                    ))
                }
                HotPlugAction::Detach if !*attached => {
                    return Err(invalid(
                        format!("{path}.action"),
                        format!("transducer {} is not attached", h.id),
                    ))
                }
                _ => *attached = matches!(h.action, HotPlugAction::Attach),
            }
            let needs_channel = matches!(h.action, HotPlugAction::Attach)
                && !registry::spec_for_kind(kind).is_actuator
                && !owner.contains_key(&h.id);
            if needs_channel {
                match self.channel_for(h.id) {
                    None => {
                        return Err(invalid(
                            format!("{path}.channel"),
                            format!("scripted sensor {} has no channel binding", h.id),
                        ))
                    }
                    Some(ch) if !self.channels.contains_key(ch) => {
                        return Err(invalid(
                            format!("{path}.channel"),
                            format!("scripted sensor {} bound to missing channel '{ch}'", h.id),
                        ))
                    }
                    _ => {}
                }
            }
        }

        // Rules must reference a placed pressure sensor and a placed actuator.
        for (ri, rule) in self.rules.iter().enumerate() {
            let path = format!("rules[{ri}]");
            let pk = registry::kind_for_id(rule.pressure_id)
                .map_err(|e| invalid(format!("{path}.pressure_id"), e.to_string()))?;
            if pk != TransducerKind::Pressure {
                return Err(invalid(
                    format!("{path}.pressure_id"),
                    format!("{} is not a pressure sensor", rule.pressure_id),
                ));
            }
            let ak = registry::kind_for_id(rule.actuator_id)
                .map_err(|e| invalid(format!("{path}.actuator_id"), e.to_string()))?;
            if ak != TransducerKind::VibroActuator {
                return Err(invalid(
                    format!("{path}.actuator_id"),
                    format!("{} is not an actuator", rule.actuator_id),
                ));
            }
            if self.host_node(rule.pressure_id).is_none() {
                return Err(invalid(
                    format!("{path}.pressure_id"),
                    format!("pressure sensor {} is not placed anywhere", rule.pressure_id),
                ));
            }
            if self.host_node(rule.actuator_id).is_none() {
                return Err(invalid(
                    format!("{path}.actuator_id"),
                    format!("actuator {} is not placed anywhere", rule.actuator_id),
                ));
            }
        }

        // Generator sanity.
        for (name, ch) in &self.channels {
            let path = format!("channels.{name}");
            match &ch.generator {
                Generator::Windows { hours, .. } => {
                    for &(s, e) in hours {
                        if s >= e || e > 24 {
                            return Err(invalid(&path, format!("bad hour window {s}..{e}")));
                        }
                    }
                }
                Generator::Occupancy { minutes, .. } => {
                    for &(s, e) in minutes {
                        if s >= e || e > 1440 {
                            return Err(invalid(&path, format!("bad minute interval {s}..{e}")));
                        }
                    }
                }
                Generator::Burst { event_minutes, .. } => {
                    for &m in event_minutes {
                        if m >= 1440 {
                            return Err(invalid(&path, format!("bad event minute {m}")));
                        }
                    }
                }
                Generator::Diurnal { peak_hour, .. } => {
                    if *peak_hour >= 24 {
                        return Err(invalid(&path, format!("bad peak hour {peak_hour}")));
                    }
                }
                _ => {}
            }
        }

        if let Some(radio) = &self.radio {
            radio.validate().map_err(|e| invalid("radio", e.to_string()))?;
        }
        Ok(())
    }
}

/// Parses and fully validates a scenario configuration document.
pub fn load_scenario(bytes: &[u8]) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario =
        serde_json::from_slice(bytes).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

fn minutes(h: u16, m: u16) -> u16 {
    h * 60 + m
}

/// The six-node home deployment.
///
/// Node 1 watches the kitchen (temperature, light, CO), node 2 the fridge
/// (egg-tray pressure, door accelerometer), node 3 the sofa (three seat
/// pressure sensors and three buzzers), node 4 a chair (pressure plus
/// buzzer), node 5 the bedroom (temperature, light), node 6 a pillow (three
/// pressure sensors and an accelerometer). A flex sensor is scripted to
/// plug into the sofa node at 06:00 and unplug at 18:00. Sofa and chair
/// pressure sensors feed the server's sit rule.
pub fn builtin_home() -> Scenario {
    let bind = |id: u8, ch: &str| TransducerBinding { id, channel: Some(ch.to_string()) };
    let act = |id: u8| TransducerBinding { id, channel: None };

    let mut channels = BTreeMap::new();
    channels.insert(
        "kitchen_temp".into(),
        ChannelSpec {
            generator: Generator::Diurnal { base: 450, amplitude: 150, peak_hour: 15 },
            noise_amp: 8,
        },
    );
    channels.insert(
        "kitchen_light".into(),
        ChannelSpec {
            generator: Generator::Windows { low: 40, high: 820, hours: vec![(7, 22)] },
            noise_amp: 25,
        },
    );
    channels.insert(
        "kitchen_co".into(),
        ChannelSpec {
            // Cooking windows; this is the channel the heatmap criteria key on.
            generator: Generator::Windows { low: 60, high: 880, hours: vec![(10, 12), (20, 21)] },
            noise_amp: 15,
        },
    );
    channels.insert(
        "fridge_egg_pressure".into(),
        ChannelSpec { generator: Generator::Constant { value: 540 }, noise_amp: 6 },
    );
    channels.insert(
        "fridge_door_accel".into(),
        ChannelSpec {
            generator: Generator::Burst {
                rest: 512,
                event_minutes: vec![
                    minutes(7, 30),
                    minutes(12, 15),
                    minutes(18, 40),
                    minutes(21, 5),
                ],
                magnitude: 380,
            },
            noise_amp: 5,
        },
    );
    for (i, name) in ["sofa_seat_1", "sofa_seat_2", "sofa_seat_3"].iter().enumerate() {
        channels.insert(
            (*name).into(),
            ChannelSpec {
                generator: Generator::Occupancy {
                    // An evening session long enough to trip the sit rule and
                    // a short one that must not.
                    minutes: vec![
                        (minutes(18, 30), minutes(19, 10)),
                        (minutes(21, 0), minutes(21, 20)),
                    ],
                    level: 700 + 10 * i as i32,
                },
                noise_amp: 30,
            },
        );
    }
    channels.insert(
        "chair_pressure".into(),
        ChannelSpec {
            generator: Generator::Occupancy {
                // 45 minutes seated in the morning (buzzes once at +30 min),
                // 20 minutes in the afternoon (never buzzes).
                minutes: vec![
                    (minutes(9, 0), minutes(9, 45)),
                    (minutes(14, 0), minutes(14, 20)),
                ],
                level: 650,
            },
            noise_amp: 25,
        },
    );
    channels.insert(
        "bedroom_temp".into(),
        ChannelSpec {
            generator: Generator::Diurnal { base: 430, amplitude: 90, peak_hour: 16 },
            noise_amp: 8,
        },
    );
    channels.insert(
        "bedroom_light".into(),
        ChannelSpec {
            generator: Generator::Windows { low: 15, high: 600, hours: vec![(6, 8), (21, 23)] },
            noise_amp: 20,
        },
    );
    for (i, name) in ["pillow_pressure_1", "pillow_pressure_2", "pillow_pressure_3"]
        .iter()
        .enumerate()
    {
        channels.insert(
            (*name).into(),
            ChannelSpec {
                generator: Generator::Occupancy {
                    minutes: vec![(0, minutes(7, 0)), (minutes(23, 0), 1440)],
                    level: 580 + 15 * i as i32,
                },
                noise_amp: 20,
            },
        );
    }
    channels.insert(
        "pillow_accel".into(),
        ChannelSpec {
            generator: Generator::Burst {
                rest: 512,
                event_minutes: vec![
                    minutes(0, 45),
                    minutes(2, 10),
                    minutes(4, 30),
                    minutes(6, 20),
                    minutes(23, 30),
                ],
                magnitude: 260,
            },
            noise_amp: 6,
        },
    );
    channels.insert(
        "sofa_flex".into(),
        ChannelSpec {
            // Cushion bend while the flex sensor is plugged in (06:00-18:00).
            generator: Generator::Windows { low: 210, high: 760, hours: vec![(12, 14)] },
            noise_amp: 12,
        },
    );

    Scenario {
        version: SCENARIO_VERSION,
        seed: 7,
        horizon_ms: MS_PER_DAY,
        nodes: vec![
            NodeSpec {
                node_id: 1,
                transducers: vec![
                    bind(72, "kitchen_temp"),
                    bind(41, "kitchen_light"),
                    bind(76, "kitchen_co"),
                ],
            },
            NodeSpec {
                node_id: 2,
                transducers: vec![bind(1, "fridge_egg_pressure"), bind(83, "fridge_door_accel")],
            },
            NodeSpec {
                node_id: 3,
                transducers: vec![
                    bind(2, "sofa_seat_1"),
                    bind(3, "sofa_seat_2"),
                    bind(4, "sofa_seat_3"),
                    act(21),
                    act(22),
                    act(23),
                ],
            },
            NodeSpec {
                node_id: 4,
                transducers: vec![bind(5, "chair_pressure"), act(24)],
            },
            NodeSpec {
                node_id: 5,
                transducers: vec![bind(73, "bedroom_temp"), bind(57, "bedroom_light")],
            },
            NodeSpec {
                node_id: 6,
                transducers: vec![
                    bind(6, "pillow_pressure_1"),
                    bind(7, "pillow_pressure_2"),
                    bind(8, "pillow_pressure_3"),
                    bind(84, "pillow_accel"),
                ],
            },
        ],
        channels,
        hotplug: vec![
            HotPlugSpec {
                t_ms: 6 * MS_PER_HOUR + 500,
                node_id: 3,
                action: HotPlugAction::Attach,
                id: 85,
                channel: Some("sofa_flex".into()),
            },
            HotPlugSpec {
                t_ms: 18 * MS_PER_HOUR + 500,
                node_id: 3,
                action: HotPlugAction::Detach,
                id: 85,
                channel: None,
            },
        ],
        rules: vec![
            SitRuleBinding { pressure_id: 2, actuator_id: 21 },
            SitRuleBinding { pressure_id: 3, actuator_id: 22 },
            SitRuleBinding { pressure_id: 4, actuator_id: 23 },
            SitRuleBinding { pressure_id: 5, actuator_id: 24 },
        ],
        radio: None,
    }
}
