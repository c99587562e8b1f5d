//! Wires scenario, nodes, radio, energy and server into a runnable
//! simulation.
//!
//! The world is the kernel's event handler. Nodes sample on their schedules,
//! batch one message per one-second reporting window, and hand it to the
//! star-topology radio; the server ingests every delivery, runs the sit
//! rule, and sends buzz control messages back through the same channel.
//! Everything shares a single air channel, so simultaneous transmissions
//! serialize in schedule order and deliveries arrive in a deterministic
//! sequence.
//!
//! After the horizon, the run drains in-flight deliveries, rule firings and
//! actuator expiries; no new sampling or reporting happens past the horizon.

use crate::energy::{self, EnergyMeter, EnergyParams, EnergyReport, NodeEnergy, Phase};
use crate::kernel::{self, Dest, EventHandler, EventPayload, EventQueue, EventSink, SimEvent};
use crate::node::{EnvSource, NodeState};
use crate::protocol;
use crate::radio::{self, RadioParams};
use crate::registry::TransducerId;
use crate::scenario::{HotPlugAction, Scenario};
use crate::server::{RuleEngine, Store, StoreCounters};
use crate::util::{labeled_stream, SplitMix64};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

/// Post-horizon grace period for draining deliveries and actuator expiries.
const DRAIN_MS: u64 = 60_000;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Radio(#[from] crate::radio::RadioError),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
    #[error(transparent)]
    Server(#[from] crate::server::ServerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Where the server's persistence streams go for a run.
#[derive(Debug, Clone)]
pub enum Persistence {
    /// Count only; no records or samples kept.
    None,
    /// In-memory buffers (small runs, tests, exports without a filesystem).
    Memory,
    /// `records.log` and `samples.csv` under this directory.
    Dir(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub persistence: Persistence,
    /// Aggregate a heatmap online during ingest (bin size in minutes).
    pub heatmap_bin_minutes: Option<u32>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { persistence: Persistence::None, heatmap_bin_minutes: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorldCounters {
    pub collected_samples: u64,
    pub emitted_samples: u64,
    pub messages_sent: u64,
    pub control_messages_sent: u64,
    pub commands_issued: u64,
    pub commands_skipped: u64,
    pub messages_lost: u64,
    pub peer_messages_received: u64,
}

/// Everything a finished run hands back.
pub struct RunOutput {
    pub energy: EnergyReport,
    pub server_meter: EnergyMeter,
    pub server_rx_bytes: u64,
    pub counters: WorldCounters,
    pub store_counters: StoreCounters,
    pub buzzes_emitted: u64,
    pub events_processed: u64,
    pub seed: u64,
    pub horizon_ms: u64,
    pub store: Store,
}

struct ScenarioEnv<'a> {
    scenario: &'a Scenario,
    seed: u64,
}

impl EnvSource for ScenarioEnv<'_> {
    fn sample(&self, channel: &str, t_ms: u64, axes: u8) -> Vec<i32> {
        self.scenario
            .sample_channel(channel, t_ms, self.seed, axes)
            .expect("channel bindings are validated at build")
    }
}

struct World<'a> {
    scenario: &'a Scenario,
    params: &'a EnergyParams,
    radio: RadioParams,
    seed: u64,
    horizon_ms: u64,
    nodes: BTreeMap<u16, NodeState>,
    /// Generation marker of each node's pending sensor tick.
    pending_tick: BTreeMap<u16, u64>,
    /// Nodes whose self-perpetuating window chain is running.
    window_started: std::collections::BTreeSet<u16>,
    store: Store,
    server_meter: EnergyMeter,
    server_rx_bytes: u64,
    channel_busy_until_ms: u64,
    counters: WorldCounters,
    loss_rng: SplitMix64,
    encode_buf: Vec<u8>,
}

impl World<'_> {
    fn node_mut(&mut self, node_id: u16) -> &mut NodeState {
        self.nodes.get_mut(&node_id).expect("events only reference built nodes")
    }

    fn schedule_tick(&mut self, node_id: u16, queue: &mut EventQueue, after_ms: u64) {
        let node = &self.nodes[&node_id];
        let horizon = self.horizon_ms;
        let next = node
            .next_tick_after(after_ms)
            .filter(|&t| t <= horizon && t <= node.active_until_ms);
        match next {
            Some(t) => {
                let current = self.pending_tick.get(&node_id).copied();
                if current.is_none_or(|pending| t < pending) {
                    queue
                        .schedule(t, EventPayload::SensorTick { node: node_id })
                        .expect("tick is in the future");
                    self.pending_tick.insert(node_id, t);
                }
            }
            None => {
                self.pending_tick.remove(&node_id);
            }
        }
    }

    /// Next reporting window boundary after `w`: every whole second while the
    /// node is powered, plus a final partial window at power-off when that
    /// instant is off the grid.
    fn next_window_end(&self, node_id: u16, after_ms: u64) -> Option<u64> {
        let node = &self.nodes[&node_id];
        let aligned = (after_ms / 1000) * 1000 + 1000;
        let candidate = if aligned > node.active_until_ms {
            node.active_until_ms
        } else {
            aligned
        };
        (candidate > after_ms && candidate <= self.horizon_ms && candidate <= node.active_until_ms)
            .then_some(candidate)
    }

    /// Serializes a transmission on the shared channel and returns the
    /// delivery instant, or None when a frame is lost.
    fn channel_transmit(&mut self, now_ms: u64, cost: &radio::TxCost) -> Option<u64> {
        let start = self.channel_busy_until_ms.max(now_ms);
        let arrival = start + cost.airtime_ms;
        self.channel_busy_until_ms = arrival;
        if self.radio.loss_ppm > 0 {
            let threshold = (u128::from(self.radio.loss_ppm) << 64) / 1_000_000;
            for _ in 0..cost.frames {
                if u128::from(self.loss_rng.next_u64()) < threshold {
                    return None;
                }
            }
        }
        Some(arrival)
    }

    fn handle_hotplug(&mut self, node_id: u16, id: TransducerId, attach: bool, t: u64, queue: &mut EventQueue) {
        let node = self.node_mut(node_id);
        let ev = if attach {
            node.bus.attach(id.get(), t).expect("validated script never double-attaches")
        } else {
            node.bus.detach(id.get(), t).expect("validated script never detaches absent ids")
        };
        for ev in node.bus.drain_events() {
            node.handle_bus_event(&ev);
        }
        debug_assert_eq!(ev.id, id);
        // Ticks are (re)scheduled before the window chain starts so that at
        // any shared instant samples are staged before the window emits.
        self.schedule_tick(node_id, queue, t);
        if !self.window_started.contains(&node_id) {
            if let Some(first) = self.next_window_end(node_id, t) {
                queue
                    .schedule(first, EventPayload::WindowEnd { node: node_id })
                    .expect("window end is in the future");
                self.window_started.insert(node_id);
            }
        }
    }

    fn handle_tick(&mut self, node_id: u16, t: u64, queue: &mut EventQueue) {
        if self.pending_tick.get(&node_id) != Some(&t) {
            return; // superseded by a hot-plug reschedule
        }
        self.pending_tick.remove(&node_id);
        let env = ScenarioEnv { scenario: self.scenario, seed: self.seed };
        let node = self.nodes.get_mut(&node_id).expect("built node");
        if node.is_active_at(t) {
            let staged = node.collect(t, &env, self.params);
            self.counters.collected_samples += staged as u64;
        }
        self.schedule_tick(node_id, queue, t);
    }

    fn handle_window_end(&mut self, node_id: u16, w: u64, queue: &mut EventQueue) {
        let transmits = {
            let params = self.params;
            let env = ScenarioEnv { scenario: self.scenario, seed: self.seed };
            let node = self.nodes.get_mut(&node_id).expect("built node");
            // Samples due exactly on the boundary belong to this window.
            // Collection is idempotent per instant, so the tick event for the
            // same millisecond (which may still be queued behind this one)
            // degenerates to a reschedule.
            if node.is_active_at(w) {
                let staged = node.collect(w, &env, params);
                self.counters.collected_samples += staged as u64;
            }
            node.debit_mcu_up_to(w, params);
            // Actuator-only nodes transmit nothing but listen.
            let transmits = node.has_sensor_entries();
            if transmits {
                let msg = node.emit_measurement(w);
                self.counters.emitted_samples += msg.samples.len() as u64;
                self.counters.messages_sent += 1;
                self.encode_buf.clear();
                protocol::encode_measurement_into(&msg, &mut self.encode_buf)
                    .expect("emitted messages satisfy the wire invariants");
            }
            transmits
        };
        if !transmits {
            if let Some(next) = self.next_window_end(node_id, w) {
                queue
                    .schedule(next, EventPayload::WindowEnd { node: node_id })
                    .expect("next window is in the future");
            }
            return;
        }
        let cost = radio::tx_cost(self.encode_buf.len(), &self.radio);
        {
            let node = self.nodes.get_mut(&node_id).expect("built node");
            node.usage.messages_tx += 1;
            node.usage.frames_tx += cost.frames;
            node.usage.bytes_on_air_tx += cost.bytes_on_air;
            node.meter.debit(Phase::Communicating, cost.energy_pj);
        }
        match self.channel_transmit(w, &cost) {
            Some(arrival) => {
                let bytes = self.encode_buf.clone();
                queue
                    .schedule(arrival, EventPayload::FrameDelivery {
                        src: node_id,
                        dst: Dest::Server,
                        bytes,
                    })
                    .expect("arrival is in the future");
            }
            None => self.counters.messages_lost += 1,
        }
        if let Some(next) = self.next_window_end(node_id, w) {
            queue
                .schedule(next, EventPayload::WindowEnd { node: node_id })
                .expect("next window is in the future");
        }
    }

    fn handle_delivery(&mut self, src: u16, dst: Dest, bytes: &[u8], t: u64, queue: &mut EventQueue) {
        let cost = radio::tx_cost(bytes.len(), &self.radio);
        match dst {
            Dest::Server => {
                self.server_meter
                    .debit(Phase::Communicating, radio::rx_cost_pj(cost.bytes_on_air, &self.radio));
                self.server_rx_bytes += cost.bytes_on_air;
                if let Ok(outcome) = self.store.ingest(bytes, t) {
                    for control in outcome.controls {
                        queue
                            .schedule(t, EventPayload::RuleFire { control })
                            .expect("rule fires now");
                    }
                }
            }
            Dest::Node(node_id) => {
                let params = self.params;
                let node = self.nodes.get_mut(&node_id).expect("built node");
                node.meter
                    .debit(Phase::Communicating, radio::rx_cost_pj(cost.bytes_on_air, &self.radio));
                node.usage.bytes_rx += cost.bytes_on_air;
                if bytes.starts_with(b"<control") {
                    let msg = protocol::decode_control(bytes)
                        .expect("rule engine emits codec-clean controls");
                    let outcome = node
                        .handle_control(&msg, t, params)
                        .expect("controls are routed to their target node");
                    self.counters.commands_skipped += outcome.skipped.len() as u64;
                    for cmd in outcome.issued {
                        self.counters.commands_issued += 1;
                        if cmd.activate {
                            queue
                                .schedule(t + u64::from(cmd.duration_ms), EventPayload::ActuatorExpiry {
                                    node: node_id,
                                    id: cmd.actuator_id,
                                })
                                .expect("expiry is in the future");
                        }
                    }
                } else {
                    // Direct node-to-node measurement unicast: validate and count.
                    if protocol::decode_measurement(bytes).is_ok() {
                        self.counters.peer_messages_received += 1;
                    }
                    let _ = src;
                }
            }
        }
    }

    fn handle_expiry(&mut self, node_id: u16, id: TransducerId, t: u64) {
        let node = self.node_mut(node_id);
        // The actuator may have been unplugged while running.
        match node.bus.command(id, false, 0, t) {
            Ok(()) | Err(crate::bus::BusError::NotPresent(_)) => {}
            Err(e) => panic!("actuator expiry failed: {e}"),
        }
    }
}

impl EventHandler for World<'_> {
    fn handle(&mut self, event: &SimEvent, queue: &mut EventQueue) {
        let t = event.time_ms;
        match &event.payload {
            EventPayload::HotPlug { node, id, attach } => {
                self.handle_hotplug(*node, *id, *attach, t, queue)
            }
            EventPayload::SensorTick { node } => self.handle_tick(*node, t, queue),
            EventPayload::WindowEnd { node } => self.handle_window_end(*node, t, queue),
            EventPayload::FrameDelivery { src, dst, bytes } => {
                let bytes = bytes.clone();
                self.handle_delivery(*src, *dst, &bytes, t, queue)
            }
            EventPayload::ActuatorExpiry { node, id } => self.handle_expiry(*node, *id, t),
            EventPayload::RuleFire { control } => {
                let bytes = protocol::encode_control(control)
                    .expect("rule engine emits codec-clean controls");
                let cost = radio::tx_cost(bytes.len(), &self.radio);
                self.server_meter.debit(Phase::Communicating, cost.energy_pj);
                self.counters.control_messages_sent += 1;
                let dst = Dest::Node(control.node_id);
                if let Some(arrival) = self.channel_transmit(t, &cost) {
                    queue
                        .schedule(arrival, EventPayload::FrameDelivery { src: 0, dst, bytes })
                        .expect("arrival is in the future");
                } else {
                    self.counters.messages_lost += 1;
                }
            }
        }
    }
}

/// Power window of a node: static nodes run for the whole horizon; a node
/// whose only transducers arrive by script is powered from its first attach
/// to its last detach (or the horizon).
fn active_window(scenario: &Scenario, node_id: u16, has_static: bool, horizon_ms: u64) -> (u64, u64) {
    if has_static {
        return (0, horizon_ms.max(1));
    }
    let mut events: Vec<&crate::scenario::HotPlugSpec> =
        scenario.hotplug.iter().filter(|h| h.node_id == node_id).collect();
    if events.is_empty() {
        return (0, horizon_ms.max(1));
    }
    events.sort_by_key(|h| (h.t_ms, h.id));
    let from = events.first().unwrap().t_ms;
    let until = match events.last().unwrap().action {
        HotPlugAction::Detach => events.last().unwrap().t_ms,
        HotPlugAction::Attach => horizon_ms,
    };
    (from, until.max(from))
}

/// Builds and runs one full simulation.
pub fn run_simulation(
    scenario: &Scenario,
    params: &EnergyParams,
    seed: u64,
    horizon_ms: u64,
    opts: &RunOptions,
    sink: &mut dyn EventSink,
) -> Result<RunOutput, WorldError> {
    scenario.validate()?;
    let radio = scenario.radio.clone().unwrap_or_else(|| params.radio.clone());
    radio.validate()?;

    let rule = RuleEngine::from_scenario(scenario);
    let mut store = match &opts.persistence {
        Persistence::None => Store::counting(rule),
        Persistence::Memory => Store::in_memory(rule),
        Persistence::Dir(dir) => {
            std::fs::create_dir_all(dir)?;
            Store::persistent(dir, rule)?
        }
    };
    if let Some(bin) = opts.heatmap_bin_minutes {
        store = store.with_online_heatmap(bin, horizon_ms)?;
    }

    let mut nodes = BTreeMap::new();
    for spec in &scenario.nodes {
        let (from, until) =
            active_window(scenario, spec.node_id, !spec.transducers.is_empty(), horizon_ms);
        let mut node = NodeState::new(spec.node_id, from, until);
        for t in &spec.transducers {
            if let Some(ch) = &t.channel {
                node.bind_channel(TransducerId::new(t.id).expect("validated id"), ch);
            }
        }
        nodes.insert(spec.node_id, node);
    }
    // Scripted sensors get their channel bindings up front too.
    for h in &scenario.hotplug {
        if let Some(ch) = &h.channel {
            if let Some(node) = nodes.get_mut(&h.node_id) {
                node.bind_channel(TransducerId::new(h.id).expect("validated id"), ch);
            }
        }
    }

    let mut world = World {
        scenario,
        params,
        radio,
        seed,
        horizon_ms,
        nodes,
        pending_tick: BTreeMap::new(),
        window_started: std::collections::BTreeSet::new(),
        store,
        server_meter: EnergyMeter::new(),
        server_rx_bytes: 0,
        channel_busy_until_ms: 0,
        counters: WorldCounters::default(),
        loss_rng: labeled_stream(seed, "radio.loss"),
        encode_buf: Vec::with_capacity(2048),
    };

    let mut queue = EventQueue::new();
    // Startup attach broadcasts: every static transducer announces itself at
    // t=0, nodes in layout order, serialized lowest-id-first per node.
    for spec in &scenario.nodes {
        let mut ids: Vec<u8> = spec.transducers.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        for raw in ids {
            queue.schedule(0, EventPayload::HotPlug {
                node: spec.node_id,
                id: TransducerId::new(raw).expect("validated id"),
                attach: true,
            })?;
        }
    }
    // Scripted events, serialized by (time, node, id).
    let mut script: Vec<&crate::scenario::HotPlugSpec> = scenario.hotplug.iter().collect();
    script.sort_by_key(|h| (h.t_ms, h.node_id, h.id));
    for h in script {
        if h.t_ms > horizon_ms {
            continue;
        }
        queue.schedule(h.t_ms, EventPayload::HotPlug {
            node: h.node_id,
            id: TransducerId::new(h.id).expect("validated id"),
            attach: matches!(h.action, HotPlugAction::Attach),
        })?;
    }
    let mut processed = kernel::run_until(&mut queue, &mut world, horizon_ms, sink);
    processed += kernel::run_until(&mut queue, &mut world, horizon_ms + DRAIN_MS, sink);
    assert!(queue.is_empty(), "events leaked past the drain window");

    // Close the books exactly at the horizon.
    let params_ref = world.params;
    for node in world.nodes.values_mut() {
        node.debit_mcu_up_to(horizon_ms, params_ref);
    }
    world.store.flush()?;

    let nodes_energy: Vec<NodeEnergy> = world
        .nodes
        .values()
        .map(|n| NodeEnergy {
            node_id: n.node_id,
            meter: n.meter.clone(),
            usage: n.usage.clone(),
            transducers: n.ever_connected(),
        })
        .collect();

    Ok(RunOutput {
        energy: EnergyReport {
            profile: params.profile.clone(),
            horizon_ms,
            nodes: nodes_energy,
        },
        server_meter: world.server_meter,
        server_rx_bytes: world.server_rx_bytes,
        counters: world.counters,
        store_counters: world.store.counters,
        buzzes_emitted: world.store.rule_engine().buzzes_emitted,
        events_processed: processed,
        seed,
        horizon_ms,
        store: world.store,
    })
}

/// Runs the clustered network and its traditional equivalent on the same
/// traces and horizon, returning the comparison plus both run outputs.
pub fn run_comparison(
    scenario: &Scenario,
    params: &EnergyParams,
    seed: u64,
    horizon_ms: u64,
) -> Result<(energy::ComparisonReport, RunOutput, RunOutput), WorldError> {
    let mut null = kernel::NullSink;
    let proposed = run_simulation(scenario, params, seed, horizon_ms, &RunOptions::default(), &mut null)?;
    let traditional_net = energy::traditional_equivalent(scenario);
    let traditional = run_simulation(
        &traditional_net.scenario,
        params,
        seed,
        horizon_ms,
        &RunOptions::default(),
        &mut null,
    )?;
    let report = energy::compare(&proposed.energy, &traditional.energy, &traditional_net, scenario)
        .expect("both runs share horizon and transducers");
    Ok((report, proposed, traditional))
}
