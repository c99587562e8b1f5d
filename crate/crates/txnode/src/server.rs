//! Central server: ingest and persist measurement messages, run the
//! sit-detection rule, export heatmaps.
//!
//! Persistence is an append-only records log (one line per decoded message:
//! receive time, a tab, the canonical XML) plus a samples CSV
//! (`node_id,tx_id,timestamp_ms,axis,value`), both diff-friendly. Malformed
//! messages are counted and kept on a reject channel; they never reach the
//! store.
//!
//! The sit rule buzzes an actuator for 30 s once a monitored pressure sensor
//! has read values greater than zero for 30 continuous minutes, re-firing
//! every further 30 minutes while the sitting persists; any zero reading
//! resets the timer. The 30-minute boundary is inclusive.

use crate::protocol::{self, ActCommand, ControlMessage, MeasurementMessage, ProtocolError, Status};
use crate::registry::{self, TransducerId, TransducerKind};
use crate::scenario::{Scenario, SitRuleBinding};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use thiserror::Error;

/// Continuous positive pressure required before the first buzz, and between
/// consecutive buzzes.
pub const SIT_THRESHOLD_MS: u64 = 1_800_000;
/// Commanded buzz duration.
pub const BUZZ_DURATION_MS: u32 = 30_000;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("store holds no samples")]
    EmptyStore,
    #[error("bin of {bin_minutes} min does not divide the {horizon_ms} ms horizon")]
    BadBin { bin_minutes: u32, horizon_ms: u64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt samples record at line {line}: {detail}")]
    CorruptSamples { line: u64, detail: String },
}

// ---------------------------------------------------------------------------
// Sit rule
// ---------------------------------------------------------------------------

/// Timer state for one monitored pressure sensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SitRuleState {
    pub continuous_positive_since: Option<u64>,
    pub last_buzz_at: Option<u64>,
}

/// Feeds one reading into the rule; returns true when a buzz must fire now.
pub fn sit_rule(state: &mut SitRuleState, reading: u16, t_ms: u64) -> bool {
    if reading == 0 {
        state.continuous_positive_since = None;
        state.last_buzz_at = None;
        return false;
    }
    let since = *state.continuous_positive_since.get_or_insert(t_ms);
    if t_ms - since < SIT_THRESHOLD_MS {
        return false;
    }
    let due = match state.last_buzz_at {
        None => true,
        Some(last) => t_ms - last >= SIT_THRESHOLD_MS,
    };
    if due {
        state.last_buzz_at = Some(t_ms);
    }
    due
}

/// All monitored pressure sensors and the actuators they buzz.
#[derive(Debug, Default)]
pub struct RuleEngine {
    /// pressure id -> (hosting node of the actuator, actuator id)
    monitored: BTreeMap<u8, (u16, u8)>,
    states: BTreeMap<u8, SitRuleState>,
    pub buzzes_emitted: u64,
}

impl RuleEngine {
    /// Builds the engine from a scenario's rule bindings; actuator hosts are
    /// resolved against that scenario's layouts.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let mut engine = Self::default();
        for rule in &scenario.rules {
            if let Some(node) = scenario.host_node(rule.actuator_id) {
                engine.monitored.insert(rule.pressure_id, (node, rule.actuator_id));
            }
        }
        engine
    }

    pub fn from_bindings(bindings: &[(SitRuleBinding, u16)]) -> Self {
        let mut engine = Self::default();
        for (rule, node) in bindings {
            engine.monitored.insert(rule.pressure_id, (*node, rule.actuator_id));
        }
        engine
    }

    pub fn is_monitored(&self, pressure_id: u8) -> bool {
        self.monitored.contains_key(&pressure_id)
    }

    /// Observes one pressure reading; may emit a buzz control message.
    pub fn observe(&mut self, pressure_id: u8, reading: u16, t_ms: u64) -> Option<ControlMessage> {
        let &(node, actuator) = self.monitored.get(&pressure_id)?;
        let state = self.states.entry(pressure_id).or_default();
        if sit_rule(state, reading, t_ms) {
            self.buzzes_emitted += 1;
            Some(ControlMessage {
                node_id: node,
                commands: vec![ActCommand {
                    actuator_id: TransducerId::new(actuator).expect("validated actuator id"),
                    activate: true,
                    duration_ms: BUZZ_DURATION_MS,
                }],
            })
        } else {
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

/// Where a persistence stream goes.
enum Out {
    Null,
    Mem(Vec<u8>),
    File(std::io::BufWriter<std::fs::File>),
}

impl Out {
    fn write_all(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        match self {
            Out::Null => Ok(()),
            Out::Mem(buf) => {
                buf.extend_from_slice(bytes);
                Ok(())
            }
            Out::File(w) => w.write_all(bytes),
        }
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match self {
            Out::File(w) => w.flush(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreCounters {
    pub records: u64,
    pub samples: u64,
    pub sample_values: u64,
    pub rejects: u64,
}

/// One layout transition observed in the message stream; the audit trail of
/// hot-plug activity as seen by the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutChange {
    pub recv_ms: u64,
    pub node_id: u16,
    pub tx_id: u8,
    pub status: Status,
}

/// Successful ingest: the record id plus any control messages the rule
/// engine decided to send.
#[derive(Debug)]
pub struct IngestOutcome {
    pub record_id: u64,
    pub controls: Vec<ControlMessage>,
}

/// Append-only message store with streaming persistence and optional online
/// heatmap aggregation.
pub struct Store {
    records_out: Out,
    samples_out: Out,
    pub counters: StoreCounters,
    /// Per (node, transducer) ingested sample counts.
    index: BTreeMap<(u16, u8), u64>,
    rejects: Vec<(u64, String)>,
    layout_seen: BTreeMap<(u16, u8), Status>,
    layout_changes: Vec<LayoutChange>,
    rule: RuleEngine,
    agg: Option<OnlineHeatmap>,
}

impl Store {
    /// Fully in-memory store (tests, library callers, energy comparisons).
    pub fn in_memory(rule: RuleEngine) -> Self {
        Self::build(Out::Mem(Vec::new()), Out::Mem(Vec::new()), rule)
    }

    /// Store that only counts and aggregates; persistence discarded.
    pub fn counting(rule: RuleEngine) -> Self {
        Self::build(Out::Null, Out::Null, rule)
    }

    /// Store persisting into `records.log` and `samples.csv` under `dir`.
    pub fn persistent(dir: &std::path::Path, rule: RuleEngine) -> std::io::Result<Self> {
        let records = std::fs::File::create(dir.join("records.log"))?;
        let samples = std::fs::File::create(dir.join("samples.csv"))?;
        let mut store = Self::build(
            Out::File(std::io::BufWriter::new(records)),
            Out::File(std::io::BufWriter::new(samples)),
            rule,
        );
        store
            .samples_out
            .write_all(b"node_id,tx_id,timestamp_ms,axis,value\n")?;
        Ok(store)
    }

    fn build(records_out: Out, samples_out: Out, rule: RuleEngine) -> Self {
        Self {
            records_out,
            samples_out,
            counters: StoreCounters::default(),
            index: BTreeMap::new(),
            rejects: Vec::new(),
            layout_seen: BTreeMap::new(),
            layout_changes: Vec::new(),
            rule,
            agg: None,
        }
    }

    /// Enables online per-bin aggregation so heatmaps come straight from the
    /// ingest stream (used when no samples CSV is kept around).
    pub fn with_online_heatmap(mut self, bin_minutes: u32, horizon_ms: u64) -> Result<Self, ServerError> {
        self.agg = Some(OnlineHeatmap::new(bin_minutes, horizon_ms)?);
        Ok(self)
    }

    /// Decodes and appends one message. Schema/invariant failures land on the
    /// reject channel and leave the store unchanged.
    pub fn ingest(&mut self, bytes: &[u8], recv_ms: u64) -> Result<IngestOutcome, ProtocolError> {
        let msg = match protocol::decode_measurement(bytes) {
            Ok(msg) => msg,
            Err(e) => {
                self.counters.rejects += 1;
                self.rejects.push((recv_ms, e.to_string()));
                return Err(e);
            }
        };
        self.append(&msg, bytes, recv_ms)
            .expect("store persistence failed");
        let mut controls = Vec::new();
        for sample in &msg.samples {
            if sample.id.kind() == TransducerKind::Pressure
                && self.rule.is_monitored(sample.id.get())
            {
                if let Some(ctrl) =
                    self.rule.observe(sample.id.get(), sample.values[0], sample.timestamp_ms)
                {
                    controls.push(ctrl);
                }
            }
        }
        Ok(IngestOutcome { record_id: self.counters.records, controls })
    }

    fn append(
        &mut self,
        msg: &MeasurementMessage,
        bytes: &[u8],
        recv_ms: u64,
    ) -> std::io::Result<()> {
        let mut line = Vec::with_capacity(bytes.len() + 16);
        crate::util::push_decimal(&mut line, recv_ms);
        line.push(b'\t');
        line.extend_from_slice(bytes);
        line.push(b'\n');
        self.records_out.write_all(&line)?;

        let mut csv = Vec::new();
        for sample in &msg.samples {
            for (axis, &value) in sample.values.iter().enumerate() {
                crate::util::push_decimal(&mut csv, u64::from(msg.node_id));
                csv.push(b',');
                crate::util::push_decimal(&mut csv, u64::from(sample.id.get()));
                csv.push(b',');
                crate::util::push_decimal(&mut csv, sample.timestamp_ms);
                csv.push(b',');
                crate::util::push_decimal(&mut csv, axis as u64);
                csv.push(b',');
                crate::util::push_decimal(&mut csv, u64::from(value));
                csv.push(b'\n');
                if let Some(agg) = self.agg.as_mut() {
                    agg.add(msg.node_id, sample.id.get(), axis as u8, sample.timestamp_ms, value);
                }
                self.counters.sample_values += 1;
            }
            *self.index.entry((msg.node_id, sample.id.get())).or_insert(0) += 1;
            self.counters.samples += 1;
        }
        self.samples_out.write_all(&csv)?;

        for entry in &msg.layout {
            let key = (msg.node_id, entry.id.get());
            if self.layout_seen.insert(key, entry.status) != Some(entry.status) {
                self.layout_changes.push(LayoutChange {
                    recv_ms,
                    node_id: msg.node_id,
                    tx_id: entry.id.get(),
                    status: entry.status,
                });
            }
        }
        self.counters.records += 1;
        Ok(())
    }

    pub fn samples_for(&self, node_id: u16, tx_id: u8) -> u64 {
        self.index.get(&(node_id, tx_id)).copied().unwrap_or(0)
    }

    pub fn rejects(&self) -> &[(u64, String)] {
        &self.rejects
    }

    pub fn layout_changes(&self) -> &[LayoutChange] {
        &self.layout_changes
    }

    pub fn rule_engine(&self) -> &RuleEngine {
        &self.rule
    }

    /// In-memory persistence buffers (records log, samples CSV), when present.
    pub fn memory_buffers(&self) -> (Option<&[u8]>, Option<&[u8]>) {
        let records = match &self.records_out {
            Out::Mem(buf) => Some(buf.as_slice()),
            _ => None,
        };
        let samples = match &self.samples_out {
            Out::Mem(buf) => Some(buf.as_slice()),
            _ => None,
        };
        (records, samples)
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.records_out.flush()?;
        self.samples_out.flush()
    }

    /// Heatmap from the online aggregation, if enabled.
    pub fn heatmap(&self) -> Result<Heatmap, ServerError> {
        match &self.agg {
            Some(agg) => agg.finish(),
            None => Err(ServerError::EmptyStore),
        }
    }
}

// ---------------------------------------------------------------------------
// Heatmap
// ---------------------------------------------------------------------------

/// Per-channel, per-bin matrix of min-max-normalized mean values in [0, 1].
/// Rows are ordered node-major, transducer-minor, axis-last; white (0) marks
/// the row minimum and dark (1) the maximum. Constant and empty cells map
/// to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub bin_minutes: u32,
    pub row_labels: Vec<String>,
    pub bin_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn row(&self, label: &str) -> Option<&[f64]> {
        self.row_labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.values[i].as_slice())
    }

    /// CSV matrix: header of bin labels, first column of channel labels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel");
        for label in &self.bin_labels {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            out.push_str(label);
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }

    /// Plain PGM (P2), one pixel per cell: 255 (white) at the row minimum,
    /// 0 (dark) at the maximum.
    pub fn to_pgm(&self) -> String {
        let width = self.bin_labels.len();
        let height = self.row_labels.len();
        let mut out = format!("P2\n# transducer measurements, white=min dark=max\n{width} {height}\n255\n");
        for row in &self.values {
            let line: Vec<String> = row
                .iter()
                .map(|v| (255.0 - (v * 255.0).round()) as u32)
                .map(|p| p.to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Streaming per-bin accumulator keyed by (node, transducer, axis).
#[derive(Debug, Clone)]
pub struct OnlineHeatmap {
    bin_minutes: u32,
    bin_ms: u64,
    bins: usize,
    cells: BTreeMap<(u16, u8, u8), Vec<(u64, u64)>>,
}

impl OnlineHeatmap {
    pub fn new(bin_minutes: u32, horizon_ms: u64) -> Result<Self, ServerError> {
        let bin_ms = u64::from(bin_minutes) * 60_000;
        if bin_minutes == 0 || horizon_ms == 0 || horizon_ms % bin_ms != 0 {
            return Err(ServerError::BadBin { bin_minutes, horizon_ms });
        }
        Ok(Self {
            bin_minutes,
            bin_ms,
            bins: (horizon_ms / bin_ms) as usize,
            cells: BTreeMap::new(),
        })
    }

    pub fn add(&mut self, node_id: u16, tx_id: u8, axis: u8, t_ms: u64, value: u16) {
        // Samples on a bin boundary belong to the bin they close, matching
        // the (start, end] window convention.
        let idx = if t_ms == 0 { 0 } else { ((t_ms - 1) / self.bin_ms) as usize };
        if idx >= self.bins {
            return;
        }
        let row = self
            .cells
            .entry((node_id, tx_id, axis))
            .or_insert_with(|| vec![(0, 0); self.bins]);
        row[idx].0 += u64::from(value);
        row[idx].1 += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn finish(&self) -> Result<Heatmap, ServerError> {
        if self.cells.is_empty() {
            return Err(ServerError::EmptyStore);
        }
        let bin_labels = (0..self.bins)
            .map(|i| {
                let start_min = (i as u64 * self.bin_ms) / 60_000;
                format!("{:02}:{:02}", start_min / 60, start_min % 60)
            })
            .collect();
        let mut row_labels = Vec::new();
        let mut values = Vec::new();
        for ((node, tx, axis), bins) in &self.cells {
            let axes = registry::kind_for_id(*tx)
                .map(|k| registry::spec_for_kind(k).axes)
                .unwrap_or(1);
            let label = if axes > 1 {
                let axis_name = ["x", "y", "z"].get(*axis as usize).copied().unwrap_or("w");
                format!("n{node}.tx{tx}.{axis_name}")
            } else {
                format!("n{node}.tx{tx}")
            };
            let means: Vec<Option<f64>> = bins
                .iter()
                .map(|&(sum, count)| (count > 0).then(|| sum as f64 / count as f64))
                .collect();
            let present: Vec<f64> = means.iter().flatten().copied().collect();
            let min = present.iter().copied().fold(f64::INFINITY, f64::min);
            let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let row: Vec<f64> = means
                .iter()
                .map(|m| match m {
                    Some(v) if max > min => (v - min) / (max - min),
                    _ => 0.0,
                })
                .collect();
            row_labels.push(label);
            values.push(row);
        }
        Ok(Heatmap { bin_minutes: self.bin_minutes, row_labels, bin_labels, values })
    }
}

/// Builds a heatmap by replaying a samples CSV (as written by the store).
pub fn heatmap_from_samples_csv<R: BufRead>(
    reader: R,
    bin_minutes: u32,
    horizon_ms: u64,
) -> Result<Heatmap, ServerError> {
    let mut agg = OnlineHeatmap::new(bin_minutes, horizon_ms)?;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 && line.starts_with("node_id") {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let corrupt = |detail: &str| ServerError::CorruptSamples {
            line: lineno as u64 + 1,
            detail: detail.to_string(),
        };
        let mut fields = line.split(',');
        let mut next = |name: &str| fields.next().ok_or_else(|| corrupt(name));
        let node: u16 = next("node_id")?.parse().map_err(|_| corrupt("node_id"))?;
        let tx: u8 = next("tx_id")?.parse().map_err(|_| corrupt("tx_id"))?;
        let t: u64 = next("timestamp_ms")?.parse().map_err(|_| corrupt("timestamp_ms"))?;
        let axis: u8 = next("axis")?.parse().map_err(|_| corrupt("axis"))?;
        let value: u16 = next("value")?.parse().map_err(|_| corrupt("value"))?;
        agg.add(node, tx, axis, t, value);
    }
    agg.finish()
}

// ---------------------------------------------------------------------------
// Optional TCP front-end
// ---------------------------------------------------------------------------

/// Line-framed XML over a local TCP stream: one measurement document per
/// line, UTF-8. Receive time is the arrival index. Serves one connection at
/// a time; intended for manual poking, not for the simulation path.
pub fn serve_connection<S: std::io::Read>(
    stream: S,
    store: &mut Store,
) -> std::io::Result<(u64, u64)> {
    let reader = std::io::BufReader::new(stream);
    let (mut accepted, mut rejected) = (0, 0);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match store.ingest(line.as_bytes(), idx as u64) {
            Ok(_) => accepted += 1,
            Err(_) => rejected += 1,
        }
    }
    Ok((accepted, rejected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{encode_measurement, Interface, LayoutEntry, SampleEntry};
    use crate::scenario::builtin_home;

    fn tid(raw: u8) -> TransducerId {
        TransducerId::new(raw).unwrap()
    }

    fn message(node_id: u16, t: u64, samples: &[(u8, u16)]) -> Vec<u8> {
        let layout = samples
            .iter()
            .map(|&(id, _)| LayoutEntry { id: tid(id), status: Status::Running })
            .collect();
        let samples = samples
            .iter()
            .map(|&(id, v)| SampleEntry { id: tid(id), timestamp_ms: t, values: vec![v] })
            .collect();
        encode_measurement(&MeasurementMessage {
            node_id,
            timestamp_ms: t,
            interface: Interface::ZigBee,
            layout,
            samples,
        })
        .unwrap()
    }

    #[test]
    fn sit_rule_fires_at_the_inclusive_boundary() {
        let mut state = SitRuleState::default();
        assert!(!sit_rule(&mut state, 500, 0));
        assert!(!sit_rule(&mut state, 500, 1_799_000));
        assert!(sit_rule(&mut state, 500, 1_800_000));
        // Re-fires every further 30 minutes while positive.
        assert!(!sit_rule(&mut state, 500, 1_801_000));
        assert!(sit_rule(&mut state, 500, 3_600_000));
    }

    #[test]
    fn sit_rule_resets_on_zero() {
        let mut state = SitRuleState::default();
        assert!(!sit_rule(&mut state, 400, 0));
        assert!(!sit_rule(&mut state, 0, 900_000));
        assert!(!sit_rule(&mut state, 400, 901_000));
        // The timer restarted at 901 000.
        assert!(!sit_rule(&mut state, 400, 1_800_000));
        assert!(sit_rule(&mut state, 400, 901_000 + 1_800_000));
    }

    #[test]
    fn positivity_over_4_million_ms_buzzes_exactly_twice() {
        let mut state = SitRuleState::default();
        let mut buzzes = vec![];
        for t in (0..=4_000_000u64).step_by(1000) {
            if sit_rule(&mut state, 700, t) {
                buzzes.push(t);
            }
        }
        assert_eq!(buzzes, vec![1_800_000, 3_600_000]);
    }

    #[test]
    fn rule_engine_emits_codec_clean_buzz() {
        let home = builtin_home();
        let mut engine = RuleEngine::from_scenario(&home);
        assert!(engine.is_monitored(5));
        assert!(!engine.is_monitored(1));
        let mut fired = None;
        for t in (1000..=2_000_000u64).step_by(1000) {
            if let Some(ctrl) = engine.observe(5, 650, t) {
                fired = Some((t, ctrl));
                break;
            }
        }
        let (t, ctrl) = fired.expect("rule must fire");
        assert_eq!(t, 1000 + SIT_THRESHOLD_MS);
        assert_eq!(ctrl.node_id, 4);
        assert_eq!(ctrl.commands[0].duration_ms, BUZZ_DURATION_MS);
        // The buzz survives the codec round trip.
        let bytes = protocol::encode_control(&ctrl).unwrap();
        assert_eq!(protocol::decode_control(&bytes).unwrap(), ctrl);
    }

    #[test]
    fn ingest_appends_and_indexes() {
        let mut store = Store::in_memory(RuleEngine::default());
        let bytes = message(1, 1000, &[(72, 500), (41, 600), (76, 70)]);
        let outcome = store.ingest(&bytes, 1010).unwrap();
        assert_eq!(outcome.record_id, 1);
        assert_eq!(store.counters.records, 1);
        assert_eq!(store.counters.samples, 3);
        assert_eq!(store.samples_for(1, 72), 1);

        let (records, samples) = store.memory_buffers();
        let records = String::from_utf8(records.unwrap().to_vec()).unwrap();
        assert!(records.starts_with("1010\t<node id=\"1\""));
        let samples = String::from_utf8(samples.unwrap().to_vec()).unwrap();
        assert!(samples.contains("1,72,1000,0,500"));
    }

    #[test]
    fn malformed_bytes_hit_the_reject_channel() {
        let mut store = Store::in_memory(RuleEngine::default());
        assert!(store.ingest(b"<node id=\"1\"", 5).is_err());
        assert_eq!(store.counters.rejects, 1);
        assert_eq!(store.counters.records, 0);
        assert_eq!(store.rejects().len(), 1);
    }

    #[test]
    fn layout_transitions_are_audited() {
        let mut store = Store::in_memory(RuleEngine::default());
        store.ingest(&message(3, 1000, &[(2, 100)]), 1000).unwrap();
        // Same status again: no new change entries.
        store.ingest(&message(3, 2000, &[(2, 100)]), 2000).unwrap();
        assert_eq!(store.layout_changes().len(), 1);
        // Status flip shows up.
        let msg = MeasurementMessage {
            node_id: 3,
            timestamp_ms: 3000,
            interface: Interface::ZigBee,
            layout: vec![LayoutEntry { id: tid(2), status: Status::Stopped }],
            samples: vec![],
        };
        store.ingest(&encode_measurement(&msg).unwrap(), 3000).unwrap();
        assert_eq!(store.layout_changes().len(), 2);
        assert_eq!(store.layout_changes()[1].status, Status::Stopped);
    }

    #[test]
    fn constant_rows_normalize_to_zero() {
        let mut agg = OnlineHeatmap::new(60, 3_600_000 * 2).unwrap();
        for t in [1000u64, 3_600_000, 7_200_000] {
            agg.add(1, 72, 0, t, 512);
        }
        let map = agg.finish().unwrap();
        assert_eq!(map.row_labels, vec!["n1.tx72"]);
        assert!(map.values[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_constant_rows_attain_zero_and_one() {
        let mut agg = OnlineHeatmap::new(60, 7_200_000).unwrap();
        agg.add(1, 76, 0, 1000, 100);
        agg.add(1, 76, 0, 3_700_000, 900);
        let map = agg.finish().unwrap();
        let row = map.row("n1.tx76").unwrap();
        assert_eq!(row, &[0.0, 1.0]);
        assert!(map.to_pgm().starts_with("P2\n"));
        // White (255) where the value is minimal, dark (0) at the maximum.
        assert!(map.to_pgm().contains("255 0"));
    }

    #[test]
    fn accelerometer_rows_split_per_axis_in_order() {
        let mut agg = OnlineHeatmap::new(60, 3_600_000).unwrap();
        for axis in 0..3u8 {
            agg.add(2, 83, axis, 1000, 500 + u16::from(axis));
        }
        agg.add(2, 1, 0, 1000, 7);
        let map = agg.finish().unwrap();
        assert_eq!(
            map.row_labels,
            vec!["n2.tx1", "n2.tx83.x", "n2.tx83.y", "n2.tx83.z"]
        );
    }

    #[test]
    fn bin_must_divide_horizon() {
        assert!(matches!(
            OnlineHeatmap::new(7, 3_600_000),
            Err(ServerError::BadBin { .. })
        ));
        assert!(OnlineHeatmap::new(60, 86_400_000).is_ok());
        let empty = OnlineHeatmap::new(60, 3_600_000).unwrap();
        assert!(matches!(empty.finish(), Err(ServerError::EmptyStore)));
    }

    #[test]
    fn csv_replay_matches_online_aggregation() {
        let mut store = Store::in_memory(RuleEngine::default())
            .with_online_heatmap(60, 7_200_000)
            .unwrap();
        for t in 1..=7200u64 {
            let v = if t % 2 == 0 { 800 } else { 100 };
            store.ingest(&message(1, t * 1000, &[(76, v)]), t * 1000).unwrap();
        }
        let online = store.heatmap().unwrap();
        let (_, samples_csv) = store.memory_buffers();
        let replay = heatmap_from_samples_csv(
            std::io::BufReader::new(samples_csv.unwrap()),
            60,
            7_200_000,
        )
        .unwrap();
        assert_eq!(online, replay);
    }

    #[test]
    fn tcp_style_line_ingest() {
        let mut store = Store::in_memory(RuleEngine::default());
        let mut input = Vec::new();
        input.extend_from_slice(&message(1, 1000, &[(72, 1)]));
        input.push(b'\n');
        input.extend_from_slice(b"garbage\n");
        input.extend_from_slice(&message(1, 2000, &[(72, 2)]));
        input.push(b'\n');
        let (accepted, rejected) = serve_connection(&input[..], &mut store).unwrap();
        assert_eq!((accepted, rejected), (2, 1));
        assert_eq!(store.counters.records, 2);
    }
}
