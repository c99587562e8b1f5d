//! Emulated on-node communication bus.
//!
//! Transducer units share one wired bus with the node's data collection
//! module. A unit announces itself by broadcasting its unique ID when it is
//! connected or disconnected; in between, the master polls sensors for raw
//! samples and drives actuators. Transfer latency is modeled as zero (well
//! below the 1 ms tick), and simultaneous broadcasts are serialized
//! lowest-ID-first by the scenario scheduler.

use crate::registry::{self, TransducerId, TransducerKind};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error(transparent)]
    Registry(#[from] registry::RegistryError),
    #[error("transducer {0} is already present on the bus")]
    AlreadyPresent(TransducerId),
    #[error("transducer {0} is not present on the bus")]
    NotPresent(u8),
    #[error("transducer {0} is an actuator and cannot be polled")]
    NotASensor(TransducerId),
    #[error("transducer {0} is not an actuator")]
    NotAnActuator(TransducerId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusEventKind {
    Attached,
    Detached,
}

/// A hot-plug broadcast observed on the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusEvent {
    pub kind: BusEventKind,
    pub id: TransducerId,
    pub time_ms: u64,
}

/// One polled measurement, clamped to the kind's raw value range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSample {
    pub id: TransducerId,
    pub time_ms: u64,
    pub values: Vec<u16>,
}

/// Bus state: which transducers are present, plus the queue of hot-plug
/// events not yet consumed by the monitoring module.
#[derive(Debug, Default)]
pub struct BusState {
    present: BTreeSet<TransducerId>,
    pending_events: VecDeque<BusEvent>,
    /// Actuators currently running, with their scheduled stop time.
    active_until: BTreeMap<TransducerId, u64>,
}

impl BusState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_present(&self, id: TransducerId) -> bool {
        self.present.contains(&id)
    }

    pub fn present(&self) -> impl Iterator<Item = TransducerId> + '_ {
        self.present.iter().copied()
    }

    /// Connects a transducer; it broadcasts its ID as an Attached event.
    pub fn attach(&mut self, raw_id: u8, time_ms: u64) -> Result<BusEvent, BusError> {
        let id = TransducerId::new(raw_id)?;
        if !self.present.insert(id) {
            return Err(BusError::AlreadyPresent(id));
        }
        let ev = BusEvent { kind: BusEventKind::Attached, id, time_ms };
        self.pending_events.push_back(ev);
        Ok(ev)
    }

    /// Disconnects a transducer; it broadcasts its ID as a Detached event.
    pub fn detach(&mut self, raw_id: u8, time_ms: u64) -> Result<BusEvent, BusError> {
        let id = TransducerId::new(raw_id)?;
        if !self.present.remove(&id) {
            return Err(BusError::NotPresent(raw_id));
        }
        self.active_until.remove(&id);
        let ev = BusEvent { kind: BusEventKind::Detached, id, time_ms };
        self.pending_events.push_back(ev);
        Ok(ev)
    }

    /// Drains the hot-plug events queued for the monitoring module.
    pub fn drain_events(&mut self) -> Vec<BusEvent> {
        self.pending_events.drain(..).collect()
    }

    /// Polls a present sensor. Environment values outside the kind's raw
    /// range saturate, as a real ADC would.
    pub fn poll(&self, id: TransducerId, time_ms: u64, env_values: &[i32]) -> Result<RawSample, BusError> {
        if !self.present.contains(&id) {
            return Err(BusError::NotPresent(id.get()));
        }
        let spec = registry::spec_for_kind(id.kind());
        if spec.is_actuator {
            return Err(BusError::NotASensor(id));
        }
        assert_eq!(
            env_values.len(),
            spec.axes as usize,
            "environment value arity must match the sensor's axes"
        );
        let values = env_values
            .iter()
            .map(|&v| v.clamp(i32::from(spec.value_range.0), i32::from(spec.value_range.1)) as u16)
            .collect();
        Ok(RawSample { id, time_ms, values })
    }

    /// Activates or deactivates a present actuator.
    pub fn command(
        &mut self,
        id: TransducerId,
        activate: bool,
        duration_ms: u32,
        time_ms: u64,
    ) -> Result<(), BusError> {
        if !self.present.contains(&id) {
            return Err(BusError::NotPresent(id.get()));
        }
        if id.kind() != TransducerKind::VibroActuator {
            return Err(BusError::NotAnActuator(id));
        }
        if activate {
            assert!(duration_ms > 0, "activation requires a positive duration");
            self.active_until.insert(id, time_ms + u64::from(duration_ms));
        } else {
            self.active_until.remove(&id);
        }
        Ok(())
    }

    pub fn actuator_active(&self, id: TransducerId, time_ms: u64) -> bool {
        self.active_until.get(&id).is_some_and(|&until| time_ms < until)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::SplitMix64;

    fn tid(raw: u8) -> TransducerId {
        TransducerId::new(raw).unwrap()
    }

    #[test]
    fn attach_detach_examples() {
        let mut bus = BusState::new();
        let ev = bus.attach(72, 0).unwrap();
        assert_eq!(ev.kind, BusEventKind::Attached);
        assert_eq!(ev.time_ms, 0);
        assert!(bus.is_present(tid(72)));

        let ev = bus.attach(41, 5).unwrap();
        assert_eq!((ev.id.get(), ev.time_ms), (41, 5));

        assert_eq!(bus.attach(72, 9), Err(BusError::AlreadyPresent(tid(72))));

        let ev = bus.detach(41, 100).unwrap();
        assert_eq!(ev.kind, BusEventKind::Detached);
        assert!(!bus.is_present(tid(41)));
        assert_eq!(bus.detach(41, 100), Err(BusError::NotPresent(41)));

        assert!(matches!(bus.attach(50, 0), Err(BusError::Registry(_))));
    }

    #[test]
    fn attach_detach_attach_alternates() {
        let mut bus = BusState::new();
        bus.attach(5, 0).unwrap();
        bus.detach(5, 10).unwrap();
        bus.attach(5, 20).unwrap();
        let kinds: Vec<_> = bus.drain_events().iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![BusEventKind::Attached, BusEventKind::Detached, BusEventKind::Attached]
        );
    }

    #[test]
    fn poll_clamps_and_validates() {
        let mut bus = BusState::new();
        bus.attach(76, 0).unwrap();
        bus.attach(83, 0).unwrap();
        bus.attach(25, 0).unwrap();

        let s = bus.poll(tid(76), 1000, &[880]).unwrap();
        assert_eq!(s, RawSample { id: tid(76), time_ms: 1000, values: vec![880] });

        let s = bus.poll(tid(83), 1000, &[10, -5, 1020]).unwrap();
        assert_eq!(s.values, vec![10, 0, 1020]);
        let s = bus.poll(tid(83), 1000, &[0, 5000, 1023]).unwrap();
        assert_eq!(s.values, vec![0, 1023, 1023]);

        assert_eq!(bus.poll(tid(25), 1000, &[1]), Err(BusError::NotASensor(tid(25))));
        assert_eq!(bus.poll(tid(72), 1000, &[1]), Err(BusError::NotPresent(72)));
    }

    #[test]
    fn command_drives_actuators_only() {
        let mut bus = BusState::new();
        bus.attach(22, 0).unwrap();
        bus.attach(5, 0).unwrap();

        bus.command(tid(22), true, 30_000, 1000).unwrap();
        assert!(bus.actuator_active(tid(22), 1000));
        assert!(bus.actuator_active(tid(22), 30_999));
        assert!(!bus.actuator_active(tid(22), 31_000));

        bus.command(tid(22), false, 0, 2000).unwrap();
        assert!(!bus.actuator_active(tid(22), 2000));

        assert_eq!(bus.command(tid(5), true, 30_000, 0), Err(BusError::NotAnActuator(tid(5))));
        assert_eq!(bus.command(tid(23), true, 1, 0), Err(BusError::NotPresent(23)));
    }

    /// Brute-force oracle: presence equals {ids attached more often than
    /// detached}, and per-id event kinds strictly alternate.
    #[test]
    fn random_sequences_match_multiset_oracle() {
        let mut rng = SplitMix64::new(0xb0b);
        let pool: Vec<u8> = vec![1, 2, 5, 21, 41, 57, 72, 76, 83, 85];
        for _ in 0..300 {
            let mut bus = BusState::new();
            let mut oracle: BTreeMap<u8, i64> = BTreeMap::new();
            for step in 0..40u64 {
                let raw = pool[rng.next_below(pool.len() as u64) as usize];
                if rng.next_bool() {
                    if bus.attach(raw, step).is_ok() {
                        *oracle.entry(raw).or_default() += 1;
                    }
                } else if bus.detach(raw, step).is_ok() {
                    *oracle.entry(raw).or_default() -= 1;
                }
            }
            let expected: BTreeSet<u8> = oracle
                .iter()
                .filter(|(_, &n)| n > 0)
                .map(|(&id, _)| id)
                .collect();
            let got: BTreeSet<u8> = bus.present().map(|id| id.get()).collect();
            assert_eq!(got, expected);
            for (_, &n) in &oracle {
                assert!((0..=1).contains(&n), "attach/detach imbalance {n}");
            }
            // Alternation per id.
            let mut last: BTreeMap<u8, BusEventKind> = BTreeMap::new();
            for ev in bus.drain_events() {
                if let Some(prev) = last.insert(ev.id.get(), ev.kind) {
                    assert_ne!(prev, ev.kind, "events for {} did not alternate", ev.id);
                } else {
                    assert_eq!(ev.kind, BusEventKind::Attached, "first event must attach");
                }
            }
        }
    }
}
