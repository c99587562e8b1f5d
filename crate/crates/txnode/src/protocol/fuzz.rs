//! Seeded generators, an independent DOM encoder, and a single-field mutation
//! corpus for the XML codec.
//!
//! The round-trip and mutation-rejection checks here back both the test suite
//! and the `fuzz-protocol` CLI subcommand. Everything is driven by
//! [`SplitMix64`], so a run is reproducible from its seed.

use super::{
    decode_control, decode_measurement, encode_control, encode_measurement, ActCommand,
    ControlMessage, Interface, LayoutEntry, MeasurementMessage, ProtocolError, SampleEntry,
    Status,
};
use crate::registry::{self, TransducerId};
use crate::util::SplitMix64;

/// Every assigned transducer id, ascending.
pub fn assigned_ids() -> Vec<TransducerId> {
    let mut out = Vec::new();
    for raw in 1..=255u8 {
        if let Ok(id) = TransducerId::new(raw) {
            out.push(id);
        }
    }
    out
}

/// Random valid measurement message.
pub fn gen_measurement(rng: &mut SplitMix64) -> MeasurementMessage {
    let pool = assigned_ids();
    let node_id = 1 + rng.next_below(40) as u16;
    let timestamp_ms = rng.next_below(86_400_000) + 1000;
    let mut layout = Vec::new();
    let mut chosen: Vec<TransducerId> = Vec::new();
    let entries = rng.next_below(7) as usize;
    while layout.len() < entries {
        let id = pool[rng.next_below(pool.len() as u64) as usize];
        if chosen.contains(&id) {
            continue;
        }
        chosen.push(id);
        let status = if rng.next_below(5) == 0 { Status::Stopped } else { Status::Running };
        layout.push(LayoutEntry { id, status });
    }
    let mut samples = Vec::new();
    for entry in &layout {
        if registry::spec_for_kind(entry.kind()).is_actuator {
            continue;
        }
        for _ in 0..rng.next_below(3) {
            let spec = registry::spec_for_kind(entry.kind());
            let values = (0..spec.axes)
                .map(|_| {
                    (u64::from(spec.value_range.0)
                        + rng.next_below(u64::from(spec.value_range.1 - spec.value_range.0) + 1))
                        as u16
                })
                .collect();
            samples.push(SampleEntry {
                id: entry.id,
                timestamp_ms: timestamp_ms - rng.next_below(1000),
                values,
            });
        }
    }
    MeasurementMessage {
        node_id,
        timestamp_ms,
        interface: Interface::ZigBee,
        layout,
        samples,
    }
}

/// Random valid control message.
pub fn gen_control(rng: &mut SplitMix64) -> ControlMessage {
    let node_id = 1 + rng.next_below(40) as u16;
    let count = rng.next_below(4) as usize;
    let mut commands = Vec::new();
    for _ in 0..count {
        let actuator_id = TransducerId::new(21 + rng.next_below(20) as u8).unwrap();
        let activate = rng.next_bool();
        let duration_ms = if activate { 1 + rng.next_below(120_000) as u32 } else { 0 };
        commands.push(ActCommand { actuator_id, activate, duration_ms });
    }
    ControlMessage { node_id, commands }
}

// ---------------------------------------------------------------------------
// Generic DOM: independent encoding route and the base for mutations
// ---------------------------------------------------------------------------

/// Minimal XML element tree. Rendering it canonically must agree byte-for-byte
/// with the handwritten encoder; mutating one field of it produces the
/// rejection corpus.
#[derive(Debug, Clone)]
pub struct XmlEl {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<XmlEl>,
    pub text: Option<String>,
}

impl XmlEl {
    fn new(name: &str) -> Self {
        Self { name: name.into(), attrs: Vec::new(), children: Vec::new(), text: None }
    }

    fn attr(mut self, key: &str, value: impl ToString) -> Self {
        self.attrs.push((key.into(), value.to_string()));
        self
    }

    pub fn render(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut Vec<u8>) {
        out.push(b'<');
        out.extend_from_slice(self.name.as_bytes());
        for (k, v) in &self.attrs {
            out.push(b' ');
            out.extend_from_slice(k.as_bytes());
            out.extend_from_slice(b"=\"");
            out.extend_from_slice(v.as_bytes());
            out.push(b'"');
        }
        if self.children.is_empty() && self.text.is_none() {
            out.extend_from_slice(b"/>");
            return;
        }
        out.push(b'>');
        if let Some(text) = &self.text {
            out.extend_from_slice(text.as_bytes());
        }
        for child in &self.children {
            child.render_into(out);
        }
        out.extend_from_slice(b"</");
        out.extend_from_slice(self.name.as_bytes());
        out.push(b'>');
    }
}

/// Measurement message as a DOM tree.
pub fn dom_measurement(msg: &MeasurementMessage) -> XmlEl {
    let mut root = XmlEl::new("node")
        .attr("id", msg.node_id)
        .attr("t", msg.timestamp_ms)
        .attr("if", msg.interface.token());
    let mut layout = XmlEl::new("layout");
    for entry in &msg.layout {
        layout.children.push(
            XmlEl::new("tx")
                .attr("id", entry.id)
                .attr("kind", entry.kind().token())
                .attr("status", entry.status.token()),
        );
    }
    let mut data = XmlEl::new("data");
    for sample in &msg.samples {
        let mut s = XmlEl::new("s").attr("id", sample.id).attr("t", sample.timestamp_ms);
        s.text = Some(
            sample
                .values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        );
        data.children.push(s);
    }
    root.children.push(layout);
    root.children.push(data);
    root
}

/// Control message as a DOM tree.
pub fn dom_control(msg: &ControlMessage) -> XmlEl {
    let mut root = XmlEl::new("control").attr("node", msg.node_id);
    for cmd in &msg.commands {
        root.children.push(
            XmlEl::new("act")
                .attr("id", cmd.actuator_id)
                .attr("on", if cmd.activate { "1" } else { "0" })
                .attr("ms", cmd.duration_ms),
        );
    }
    root
}

// ---------------------------------------------------------------------------
// Single-field mutations
// ---------------------------------------------------------------------------

/// One mutated document plus a label describing the single field that changed.
#[derive(Debug, Clone)]
pub struct Mutant {
    pub label: String,
    pub bytes: Vec<u8>,
}

fn visit_paths(el: &XmlEl, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    out.push(path.clone());
    for (i, child) in el.children.iter().enumerate() {
        path.push(i);
        visit_paths(child, path, out);
        path.pop();
    }
}

fn at_path<'a>(root: &'a mut XmlEl, path: &[usize]) -> &'a mut XmlEl {
    let mut el = root;
    for &i in path {
        el = &mut el.children[i];
    }
    el
}

/// Enumerates every single-field structural mutation of a canonical document:
/// each element renamed, each attribute dropped, each attribute key renamed,
/// an unknown attribute added to each element, each integer attribute
/// corrupted, plus a truncation. Every mutant must be rejected by the decoder.
pub fn mutants_of(root: &XmlEl) -> Vec<Mutant> {
    let mut paths = Vec::new();
    visit_paths(root, &mut Vec::new(), &mut paths);
    let mut out = Vec::new();

    for path in &paths {
        // Element rename.
        let mut doc = root.clone();
        {
            let el = at_path(&mut doc, path);
            el.name.push('x');
        }
        out.push(Mutant { label: format!("rename element at {path:?}"), bytes: doc.render() });

        let attr_count = {
            let mut doc = root.clone();
            at_path(&mut doc, path).attrs.len()
        };
        for i in 0..attr_count {
            // Attribute drop.
            let mut doc = root.clone();
            let key = {
                let el = at_path(&mut doc, path);
                let (key, _) = el.attrs.remove(i);
                key
            };
            out.push(Mutant {
                label: format!("drop attribute '{key}' at {path:?}"),
                bytes: doc.render(),
            });
            // Attribute key rename.
            let mut doc = root.clone();
            {
                let el = at_path(&mut doc, path);
                el.attrs[i].0.push('x');
            }
            out.push(Mutant {
                label: format!("rename attribute {i} at {path:?}"),
                bytes: doc.render(),
            });
            // Corrupt numeric values.
            let mut doc = root.clone();
            let was_numeric = {
                let el = at_path(&mut doc, path);
                let numeric = el.attrs[i].1.bytes().all(|b| b.is_ascii_digit());
                if numeric {
                    el.attrs[i].1 = "x".into();
                }
                numeric
            };
            if was_numeric {
                out.push(Mutant {
                    label: format!("corrupt integer attribute {i} at {path:?}"),
                    bytes: doc.render(),
                });
            }
        }
        // Unknown attribute added.
        let mut doc = root.clone();
        {
            let el = at_path(&mut doc, path);
            el.attrs.push(("zz".into(), "1".into()));
        }
        out.push(Mutant { label: format!("add attribute at {path:?}"), bytes: doc.render() });
    }

    // Truncation.
    let bytes = root.render();
    out.push(Mutant {
        label: "truncate document".into(),
        bytes: bytes[..bytes.len() / 2].to_vec(),
    });
    out
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

/// Which codec a failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Measurement,
    Control,
}

/// A reproducible counterexample: the offending document and what went wrong.
#[derive(Debug, Clone)]
pub struct Failure {
    pub kind: MessageKind,
    pub case: u64,
    pub detail: String,
    pub document: Vec<u8>,
}

/// Outcome of a fuzz run.
#[derive(Debug, Clone, Default)]
pub struct FuzzReport {
    pub round_trips: u64,
    pub mutants_rejected: u64,
    pub failures: Vec<Failure>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn check_roundtrip_measurement(msg: &MeasurementMessage) -> Result<Vec<u8>, String> {
    let bytes = encode_measurement(msg).map_err(|e| format!("encode failed: {e}"))?;
    let back = decode_measurement(&bytes).map_err(|e| format!("decode failed: {e}"))?;
    if &back != msg {
        return Err("decode(encode(m)) != m".into());
    }
    Ok(bytes)
}

fn check_roundtrip_control(msg: &ControlMessage) -> Result<Vec<u8>, String> {
    let bytes = encode_control(msg).map_err(|e| format!("encode failed: {e}"))?;
    let back = decode_control(&bytes).map_err(|e| format!("decode failed: {e}"))?;
    if &back != msg {
        return Err("decode(encode(m)) != m".into());
    }
    Ok(bytes)
}

fn reject_reason(kind: MessageKind, bytes: &[u8]) -> Option<ProtocolError> {
    match kind {
        MessageKind::Measurement => decode_measurement(bytes).err(),
        MessageKind::Control => decode_control(bytes).err(),
    }
}

/// Runs `iterations` round-trip cases per message type plus the full mutation
/// corpus of each generated document. Deterministic per seed.
pub fn run(iterations: u64, seed: u64) -> FuzzReport {
    let mut rng = SplitMix64::new(seed);
    let mut report = FuzzReport::default();
    for case in 0..iterations {
        let m = gen_measurement(&mut rng);
        match check_roundtrip_measurement(&m) {
            Ok(_) => {
                report.round_trips += 1;
                // Only a sample of cases goes through the (large) mutation
                // corpus; golden documents are fully covered in the tests.
                if case % 50 == 0 {
                    check_mutants(MessageKind::Measurement, &dom_measurement(&m), case, &mut report);
                }
            }
            Err(detail) => report.failures.push(Failure {
                kind: MessageKind::Measurement,
                case,
                detail,
                document: encode_measurement(&m).unwrap_or_default(),
            }),
        }
        let c = gen_control(&mut rng);
        match check_roundtrip_control(&c) {
            Ok(_) => {
                report.round_trips += 1;
                if case % 50 == 0 {
                    check_mutants(MessageKind::Control, &dom_control(&c), case, &mut report);
                }
            }
            Err(detail) => report.failures.push(Failure {
                kind: MessageKind::Control,
                case,
                detail,
                document: encode_control(&c).unwrap_or_default(),
            }),
        }
    }
    report
}

fn check_mutants(kind: MessageKind, dom: &XmlEl, case: u64, report: &mut FuzzReport) {
    for mutant in mutants_of(dom) {
        match reject_reason(kind, &mutant.bytes) {
            Some(_) => report.mutants_rejected += 1,
            None => report.failures.push(Failure {
                kind,
                case,
                detail: format!("mutant accepted: {}", mutant.label),
                document: mutant.bytes,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuzz_run_is_deterministic_and_clean() {
        let a = run(50, 1234);
        let b = run(50, 1234);
        assert!(a.passed(), "failures: {:?}", a.failures.first());
        assert_eq!(a.round_trips, b.round_trips);
        assert_eq!(a.mutants_rejected, b.mutants_rejected);
        assert_eq!(a.round_trips, 100);
        assert!(a.mutants_rejected > 0);
    }

    #[test]
    fn harness_detects_seeded_bad_corpus_entry() {
        // Self-test: a document missing a required attribute must be reported
        // as rejected, and an intact canonical document must decode.
        let mut rng = SplitMix64::new(9);
        let msg = gen_measurement(&mut rng);
        let dom = dom_measurement(&msg);
        let mutants = mutants_of(&dom);
        assert!(!mutants.is_empty());
        for m in &mutants {
            assert!(
                reject_reason(MessageKind::Measurement, &m.bytes).is_some(),
                "mutant not rejected: {}",
                m.label
            );
        }
        assert!(decode_measurement(&dom.render()).is_ok());
    }

    #[test]
    fn control_dom_agrees_with_encoder() {
        let mut rng = SplitMix64::new(77);
        for _ in 0..200 {
            let msg = gen_control(&mut rng);
            assert_eq!(encode_control(&msg).unwrap(), dom_control(&msg).render());
        }
    }
}
