//! Wireless node state machine: connectivity tracking, sample collection,
//! window reporting, and control handling.
//!
//! A node owns its bus, a connectivity table (transducer id -> running or
//! stopped), the samples staged for the current one-second reporting window,
//! and an energy meter. Hot-plug events flip connectivity statuses; stopped
//! transducers stay in the table so the next layout description conveys the
//! removal. Samples collected before a mid-window detach are still emitted:
//! collection never loses data.
//!
//! Sampling schedule: a sensor with rate `R` Hz fires at `t = round(j*1000/R)`
//! for `j >= 1`. At 1 Hz that is every whole second ending a window; at 30 Hz
//! it is 30 ticks per window, the last one on the window boundary. A sensor
//! fires at `t` iff it is attached when the tick is processed (bus events at
//! the same millisecond are applied first).

use crate::bus::{BusError, BusEvent, BusEventKind, BusState, RawSample};
use crate::energy::{self, EnergyMeter, EnergyParams, NodeUsage, Phase};
use crate::protocol::{ActCommand, ControlMessage, Interface, LayoutEntry, MeasurementMessage, Status};
use crate::registry::{self, TransducerId};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NodeError {
    #[error("control message for node {got} delivered to node {expected}")]
    WrongNode { expected: u16, got: u16 },
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Environment values for a sensor's channel at an instant. Implemented by
/// the world over the scenario generators.
pub trait EnvSource {
    fn sample(&self, channel: &str, t_ms: u64, axes: u8) -> Vec<i32>;
}

/// True iff a sensor with the given rate fires at `t_ms`.
pub fn fires_at(rate_hz: u32, t_ms: u64) -> bool {
    let rate = u64::from(rate_hz);
    let j = (t_ms * rate + 500) / 1000;
    j >= 1 && (j * 1000 + rate / 2) / rate == t_ms
}

/// Smallest fire time strictly after `t_ms` for the given rate.
pub fn next_fire_after(rate_hz: u32, t_ms: u64) -> u64 {
    let rate = u64::from(rate_hz);
    let mut j = (t_ms * rate) / 1000 + 1;
    loop {
        let fire = (j * 1000 + rate / 2) / rate;
        if fire > t_ms {
            return fire;
        }
        j += 1;
    }
}

/// Result of applying a control message.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ControlOutcome {
    pub issued: Vec<ActCommand>,
    pub skipped: Vec<TransducerId>,
}

#[derive(Debug)]
pub struct NodeState {
    pub node_id: u16,
    pub bus: BusState,
    /// Connectivity table: every transducer ever seen, running or stopped.
    connectivity: BTreeMap<TransducerId, Status>,
    /// Channel binding per sensor.
    channels: BTreeMap<TransducerId, String>,
    staged: Vec<RawSample>,
    pub meter: EnergyMeter,
    pub usage: NodeUsage,
    /// Power window `[from, until)`; the MCU runs at active draw inside it
    /// and sleep draw outside. Static nodes are powered for the whole run.
    pub active_from_ms: u64,
    pub active_until_ms: u64,
    mcu_anchor_ms: u64,
    last_collect_ms: Option<u64>,
}

impl NodeState {
    pub fn new(node_id: u16, active_from_ms: u64, active_until_ms: u64) -> Self {
        Self {
            node_id,
            bus: BusState::new(),
            connectivity: BTreeMap::new(),
            channels: BTreeMap::new(),
            staged: Vec::new(),
            meter: EnergyMeter::new(),
            usage: NodeUsage::default(),
            active_from_ms,
            active_until_ms,
            mcu_anchor_ms: 0,
            last_collect_ms: None,
        }
    }

    pub fn bind_channel(&mut self, id: TransducerId, channel: &str) {
        self.channels.insert(id, channel.to_string());
    }

    pub fn channel_of(&self, id: TransducerId) -> Option<&str> {
        self.channels.get(&id).map(String::as_str)
    }

    pub fn status_of(&self, id: TransducerId) -> Option<Status> {
        self.connectivity.get(&id).copied()
    }

    pub fn connectivity(&self) -> impl Iterator<Item = (TransducerId, Status)> + '_ {
        self.connectivity.iter().map(|(&id, &status)| (id, status))
    }

    pub fn staged_len(&self) -> usize {
        self.staged.len()
    }

    /// Whether the node is powered at `t`. The end instant is inclusive so
    /// the tick and window landing exactly on the power-off (or horizon)
    /// boundary still run; MCU energy is still metered over `[from, until)`.
    pub fn is_active_at(&self, t_ms: u64) -> bool {
        t_ms >= self.active_from_ms && t_ms <= self.active_until_ms
    }

    /// Records a hot-plug broadcast in the connectivity table. Idempotent on
    /// repeated statuses; the change shows up in the next layout description.
    pub fn handle_bus_event(&mut self, ev: &BusEvent) {
        let status = match ev.kind {
            BusEventKind::Attached => Status::Running,
            BusEventKind::Detached => Status::Stopped,
        };
        self.connectivity.insert(ev.id, status);
        self.usage
            .samples_by_kind
            .entry(ev.id.kind())
            .or_insert(0);
    }

    /// Every transducer ever connected.
    pub fn ever_connected(&self) -> BTreeSet<u8> {
        self.connectivity.keys().map(|id| id.get()).collect()
    }

    /// Whether the connectivity table holds any sensor entry (running or
    /// stopped). Actuator-only nodes transmit nothing; they just listen for
    /// control messages.
    pub fn has_sensor_entries(&self) -> bool {
        self.connectivity
            .keys()
            .any(|id| !registry::spec_for_kind(id.kind()).is_actuator)
    }

    /// Sensors currently running, with rate and axes.
    fn running_sensors(&self) -> Vec<(TransducerId, u32, u8)> {
        self.connectivity
            .iter()
            .filter(|(_, &status)| status == Status::Running)
            .filter_map(|(&id, _)| {
                let spec = registry::spec_for_kind(id.kind());
                spec.sampling_rate_hz.map(|rate| (id, rate, spec.axes))
            })
            .collect()
    }

    /// Next tick at which any running sensor fires, strictly after `t_ms`.
    pub fn next_tick_after(&self, t_ms: u64) -> Option<u64> {
        self.running_sensors()
            .iter()
            .map(|&(_, rate, _)| next_fire_after(rate, t_ms))
            .min()
    }

    /// Polls every running sensor whose schedule fires at `tick_ms`, staging
    /// the samples and debiting sensing energy. Returns the number staged.
    /// Duplicate ticks for the same instant are ignored.
    pub fn collect(
        &mut self,
        tick_ms: u64,
        env: &dyn EnvSource,
        params: &EnergyParams,
    ) -> usize {
        if self.last_collect_ms == Some(tick_ms) {
            return 0;
        }
        self.last_collect_ms = Some(tick_ms);
        let mut staged = 0;
        for (id, rate, axes) in self.running_sensors() {
            if !fires_at(rate, tick_ms) {
                continue;
            }
            let channel = match self.channels.get(&id) {
                Some(c) => c.clone(),
                None => continue,
            };
            let values = env.sample(&channel, tick_ms, axes);
            let sample = self
                .bus
                .poll(id, tick_ms, &values)
                .expect("running sensors are present and pollable");
            self.staged.push(sample);
            *self.usage.samples_by_kind.entry(id.kind()).or_insert(0) += 1;
            self.meter
                .debit(Phase::Sensing, energy::sense_debit_pj(params, id.kind(), 1));
            staged += 1;
        }
        staged
    }

    /// Builds the window message: full layout description plus all staged
    /// samples, which are cleared. Empty windows still produce a message;
    /// the layout section doubles as a heartbeat.
    pub fn emit_measurement(&mut self, window_end_ms: u64) -> MeasurementMessage {
        let layout = self
            .connectivity
            .iter()
            .map(|(&id, &status)| LayoutEntry { id, status })
            .collect();
        let samples = std::mem::take(&mut self.staged)
            .into_iter()
            .map(|s| crate::protocol::SampleEntry {
                id: s.id,
                timestamp_ms: s.time_ms,
                values: s.values,
            })
            .collect();
        MeasurementMessage {
            node_id: self.node_id,
            timestamp_ms: window_end_ms,
            interface: Interface::ZigBee,
            layout,
            samples,
        }
    }

    /// Applies a control message: each addressed actuator that is running
    /// gets its bus command (and actuation energy debit); the rest are
    /// reported as skipped.
    pub fn handle_control(
        &mut self,
        msg: &ControlMessage,
        now_ms: u64,
        params: &EnergyParams,
    ) -> Result<ControlOutcome, NodeError> {
        if msg.node_id != self.node_id {
            return Err(NodeError::WrongNode { expected: self.node_id, got: msg.node_id });
        }
        let mut outcome = ControlOutcome::default();
        for cmd in &msg.commands {
            if self.connectivity.get(&cmd.actuator_id) == Some(&Status::Running) {
                self.bus
                    .command(cmd.actuator_id, cmd.activate, cmd.duration_ms, now_ms)?;
                if cmd.activate {
                    self.meter.debit(
                        Phase::Actuation,
                        energy::power_debit_pj(params.actuator_uw, u64::from(cmd.duration_ms)),
                    );
                    self.usage.actuation_ms += u64::from(cmd.duration_ms);
                }
                outcome.issued.push(*cmd);
            } else {
                outcome.skipped.push(cmd.actuator_id);
            }
        }
        Ok(outcome)
    }

    /// Debits MCU power for `[anchor, t)`, splitting it into the active
    /// window portion and the sleep remainder. Called at window ends and at
    /// the end of the run so the processing phase stays exact.
    pub fn debit_mcu_up_to(&mut self, t_ms: u64, params: &EnergyParams) {
        if t_ms <= self.mcu_anchor_ms {
            return;
        }
        let span_start = self.mcu_anchor_ms;
        let span_end = t_ms;
        let active_start = span_start.max(self.active_from_ms);
        let active_end = span_end.min(self.active_until_ms);
        let active_ms = active_end.saturating_sub(active_start);
        let sleep_ms = (span_end - span_start) - active_ms;
        if active_ms > 0 {
            self.meter
                .debit(Phase::Processing, energy::power_debit_pj(params.mcu_active_uw, active_ms));
            self.usage.mcu_active_ms += active_ms;
        }
        if sleep_ms > 0 {
            self.meter
                .debit(Phase::Processing, energy::power_debit_pj(params.mcu_sleep_uw, sleep_ms));
            self.usage.mcu_sleep_ms += sleep_ms;
        }
        self.mcu_anchor_ms = t_ms;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::zigbee_default;
    use crate::protocol::{decode_measurement, encode_measurement};
    use crate::util::SplitMix64;

    fn tid(raw: u8) -> TransducerId {
        TransducerId::new(raw).unwrap()
    }

    /// Environment stub: every channel reads a constant.
    struct FlatEnv(i32);

    impl EnvSource for FlatEnv {
        fn sample(&self, _channel: &str, _t: u64, axes: u8) -> Vec<i32> {
            vec![self.0; axes as usize]
        }
    }

    fn attach(node: &mut NodeState, raw: u8, t: u64, channel: Option<&str>) {
        let ev = node.bus.attach(raw, t).unwrap();
        node.handle_bus_event(&ev);
        if let Some(ch) = channel {
            node.bind_channel(tid(raw), ch);
        }
    }

    #[test]
    fn sampling_schedule_matches_enumeration_oracle() {
        // 1 Hz fires exactly at whole seconds (starting at 1000).
        let fires_1hz: Vec<u64> = (0..=3000).filter(|&t| fires_at(1, t)).collect();
        assert_eq!(fires_1hz, vec![1000, 2000, 3000]);
        // 30 Hz fires exactly 30 times in every (s, s+1000] window.
        for window in 0..5u64 {
            let lo = window * 1000;
            let count = (lo + 1..=lo + 1000).filter(|&t| fires_at(30, t)).count();
            assert_eq!(count, 30, "window ({lo}, {}]", lo + 1000);
        }
        // next_fire_after is consistent with fires_at.
        for rate in [1u32, 30] {
            let mut t = 0;
            for _ in 0..100 {
                let next = next_fire_after(rate, t);
                assert!(fires_at(rate, next));
                assert!((t + 1..next).all(|u| !fires_at(rate, u)));
                t = next;
            }
        }
    }

    #[test]
    fn bus_events_update_connectivity() {
        let mut node = NodeState::new(3, 0, u64::MAX);
        attach(&mut node, 85, 0, Some("sofa_flex"));
        assert_eq!(node.status_of(tid(85)), Some(Status::Running));

        let ev = node.bus.detach(85, 10).unwrap();
        node.handle_bus_event(&ev);
        assert_eq!(node.status_of(tid(85)), Some(Status::Stopped));
        // Stopped entries stay in the table for the next layout description.
        assert_eq!(node.connectivity().count(), 1);
    }

    #[test]
    fn random_event_stream_matches_fold_oracle() {
        let mut rng = SplitMix64::new(0xfeed);
        let pool = [1u8, 2, 21, 72, 83, 85];
        for _ in 0..200 {
            let mut node = NodeState::new(1, 0, u64::MAX);
            let mut oracle: BTreeMap<u8, Status> = BTreeMap::new();
            for step in 0..30u64 {
                let raw = pool[rng.next_below(pool.len() as u64) as usize];
                if rng.next_bool() {
                    if let Ok(ev) = node.bus.attach(raw, step) {
                        node.handle_bus_event(&ev);
                        oracle.insert(raw, Status::Running);
                    }
                } else if let Ok(ev) = node.bus.detach(raw, step) {
                    node.handle_bus_event(&ev);
                    oracle.insert(raw, Status::Stopped);
                }
            }
            let got: BTreeMap<u8, Status> =
                node.connectivity().map(|(id, s)| (id.get(), s)).collect();
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn kitchen_node_stages_three_samples_per_second() {
        let params = zigbee_default();
        let mut node = NodeState::new(1, 0, u64::MAX);
        attach(&mut node, 72, 0, Some("t"));
        attach(&mut node, 41, 0, Some("l"));
        attach(&mut node, 76, 0, Some("c"));
        assert_eq!(node.collect(1000, &FlatEnv(500), &params), 3);
        // Same tick twice is idempotent.
        assert_eq!(node.collect(1000, &FlatEnv(500), &params), 0);
        // Mid-second: nothing fires for 1 Hz sensors.
        assert_eq!(node.collect(1500, &FlatEnv(500), &params), 0);

        let mut empty = NodeState::new(9, 0, u64::MAX);
        assert_eq!(empty.collect(1000, &FlatEnv(500), &params), 0);
    }

    #[test]
    fn pillow_node_stages_33_samples_over_one_second() {
        // Three 1 Hz pressure sensors plus a 30 Hz accelerometer: one full
        // second carries 3 + 30 samples, verified against the schedule
        // enumeration oracle.
        let params = zigbee_default();
        let mut node = NodeState::new(6, 0, u64::MAX);
        for raw in [6u8, 7, 8] {
            attach(&mut node, raw, 0, Some("p"));
        }
        attach(&mut node, 84, 0, Some("a"));
        let mut staged = 0;
        for t in 1..=1000u64 {
            staged += node.collect(t, &FlatEnv(400), &params);
        }
        assert_eq!(staged, 33);
        let msg = node.emit_measurement(1000);
        assert_eq!(msg.samples.len(), 33);
        assert_eq!(node.staged_len(), 0);
        // Accelerometer samples carry three axes.
        let accel = msg.samples.iter().find(|s| s.id.get() == 84).unwrap();
        assert_eq!(accel.values.len(), 3);
    }

    #[test]
    fn emitted_message_encodes_and_reflects_connectivity() {
        let params = zigbee_default();
        let mut node = NodeState::new(5, 0, u64::MAX);
        attach(&mut node, 73, 0, Some("bt"));
        attach(&mut node, 57, 0, Some("bl"));
        node.collect(1000, &FlatEnv(321), &params);
        let msg = node.emit_measurement(1000);
        assert_eq!(msg.layout.len(), 2);
        assert_eq!(msg.samples.len(), 2);
        let bytes = encode_measurement(&msg).unwrap();
        assert_eq!(decode_measurement(&bytes).unwrap(), msg);
        // Stable size across identical runs (encoding oracle).
        let mut node2 = NodeState::new(5, 0, u64::MAX);
        attach(&mut node2, 73, 0, Some("bt"));
        attach(&mut node2, 57, 0, Some("bl"));
        node2.collect(1000, &FlatEnv(321), &params);
        let bytes2 = encode_measurement(&node2.emit_measurement(1000)).unwrap();
        assert_eq!(bytes, bytes2);

        // All transducers stopped: layout-only heartbeat.
        let ev = node.bus.detach(73, 1500).unwrap();
        node.handle_bus_event(&ev);
        let ev = node.bus.detach(57, 1500).unwrap();
        node.handle_bus_event(&ev);
        let msg = node.emit_measurement(2000);
        assert_eq!(msg.layout.len(), 2);
        assert!(msg.layout.iter().all(|e| e.status == Status::Stopped));
        assert!(msg.samples.is_empty());
        assert!(encode_measurement(&msg).is_ok());
    }

    #[test]
    fn attach_shows_up_in_next_window_message() {
        let params = zigbee_default();
        let mut node = NodeState::new(3, 0, u64::MAX);
        attach(&mut node, 2, 0, Some("s1"));
        node.collect(1000, &FlatEnv(100), &params);
        let before = node.emit_measurement(1000);
        assert!(!before.layout.iter().any(|e| e.id.get() == 85));

        attach(&mut node, 85, 1400, Some("fx"));
        let after = node.emit_measurement(2000);
        let entry = after.layout.iter().find(|e| e.id.get() == 85).unwrap();
        assert_eq!(entry.status, Status::Running);
    }

    #[test]
    fn control_handling_examples() {
        let params = zigbee_default();
        let mut node = NodeState::new(4, 0, u64::MAX);
        attach(&mut node, 5, 0, Some("cp"));
        attach(&mut node, 24, 0, None);

        // Buzz the chair actuator for 30 s.
        let buzz = ControlMessage {
            node_id: 4,
            commands: vec![ActCommand { actuator_id: tid(24), activate: true, duration_ms: 30_000 }],
        };
        let outcome = node.handle_control(&buzz, 1000, &params).unwrap();
        assert_eq!(outcome.issued.len(), 1);
        assert!(node.bus.actuator_active(tid(24), 15_000));
        assert_eq!(node.usage.actuation_ms, 30_000);

        // A stopped actuator is skipped, not an error.
        let ev = node.bus.detach(24, 40_000).unwrap();
        node.handle_bus_event(&ev);
        let outcome = node.handle_control(&buzz, 41_000, &params).unwrap();
        assert!(outcome.issued.is_empty());
        assert_eq!(outcome.skipped, vec![tid(24)]);

        // Wrong node id is an error.
        let err = node
            .handle_control(&ControlMessage { node_id: 3, commands: vec![] }, 0, &params)
            .unwrap_err();
        assert_eq!(err, NodeError::WrongNode { expected: 4, got: 3 });
    }

    #[test]
    fn sofa_control_drives_three_actuators() {
        let params = zigbee_default();
        let mut node = NodeState::new(3, 0, u64::MAX);
        for raw in [21u8, 22, 23] {
            attach(&mut node, raw, 0, None);
        }
        let msg = ControlMessage {
            node_id: 3,
            commands: [21u8, 22, 23]
                .iter()
                .map(|&raw| ActCommand { actuator_id: tid(raw), activate: true, duration_ms: 30_000 })
                .collect(),
        };
        let outcome = node.handle_control(&msg, 500, &params).unwrap();
        assert_eq!(outcome.issued.len(), 3);
    }

    #[test]
    fn mcu_debit_splits_active_and_sleep() {
        let params = zigbee_default();
        // Powered only during [2000, 5000).
        let mut node = NodeState::new(1, 2000, 5000);
        node.debit_mcu_up_to(10_000, &params);
        assert_eq!(node.usage.mcu_active_ms, 3000);
        assert_eq!(node.usage.mcu_sleep_ms, 7000);
        let expected = energy::power_debit_pj(params.mcu_active_uw, 3000)
            + energy::power_debit_pj(params.mcu_sleep_uw, 7000);
        assert_eq!(node.meter.phase_pj(Phase::Processing), expected);
        // Anchored: a second call for the same instant debits nothing.
        node.debit_mcu_up_to(10_000, &params);
        assert_eq!(node.meter.phase_pj(Phase::Processing), expected);
    }
}
