//! Catalog of transducer kinds, their reserved ID ranges and default specs.
//!
//! IDs are statically assigned, globally unique per network, and the catalog
//! is immutable at runtime: a transducer announces nothing but its ID, so the
//! receiving node must be able to resolve kind, sampling rate and axis count
//! from the ID alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("id {0} is not assigned to any transducer kind")]
    UnassignedId(u8),
    #[error("id {0} appears more than once")]
    DuplicateId(u8),
}

/// The seven supported transducer kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TransducerKind {
    Pressure,
    VibroActuator,
    LightSensor,
    Temperature,
    CoGas,
    Accelerometer,
    Flex,
}

impl TransducerKind {
    pub const ALL: [TransducerKind; 7] = [
        TransducerKind::Pressure,
        TransducerKind::VibroActuator,
        TransducerKind::LightSensor,
        TransducerKind::Temperature,
        TransducerKind::CoGas,
        TransducerKind::Accelerometer,
        TransducerKind::Flex,
    ];

    /// Short token used on the wire and in file formats.
    pub fn token(self) -> &'static str {
        match self {
            TransducerKind::Pressure => "pressure",
            TransducerKind::VibroActuator => "vibro",
            TransducerKind::LightSensor => "light",
            TransducerKind::Temperature => "temp",
            TransducerKind::CoGas => "co",
            TransducerKind::Accelerometer => "accel",
            TransducerKind::Flex => "flex",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.token() == token)
    }
}

/// A transducer ID. Valid values are 1..=255 and must fall inside one of the
/// reserved ranges below; everything else (42-56, 58-71, 79-82, 91 and up) is
/// unassigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransducerId(u8);

impl TransducerId {
    /// Validates that the raw id is assigned to some kind.
    pub fn new(raw: u8) -> Result<Self, RegistryError> {
        kind_for_raw(raw)?;
        Ok(Self(raw))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn kind(self) -> TransducerKind {
        // Construction guarantees the id is assigned.
        kind_for_raw(self.0).unwrap()
    }
}

impl std::fmt::Display for TransducerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Default spec for one kind: reserved ID ranges, sampling rate, axis count
/// and raw value range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransducerSpec {
    pub kind: TransducerKind,
    /// Inclusive ID intervals. The light sensor owns the two singletons
    /// {41} and {57}; all other kinds own one contiguous interval.
    pub id_ranges: &'static [(u8, u8)],
    /// Samples per second. `None` for actuators.
    pub sampling_rate_hz: Option<u32>,
    /// Values per sample: 1 for scalar sensors, 3 for the accelerometer.
    pub axes: u8,
    /// Inclusive raw-count range (10-bit ADC class).
    pub value_range: (u16, u16),
    pub is_actuator: bool,
}

const VALUE_RANGE_10BIT: (u16, u16) = (0, 1023);

static SPECS: [TransducerSpec; 7] = [
    TransducerSpec {
        kind: TransducerKind::Pressure,
        id_ranges: &[(1, 20)],
        sampling_rate_hz: Some(1),
        axes: 1,
        value_range: VALUE_RANGE_10BIT,
        is_actuator: false,
    },
    TransducerSpec {
        kind: TransducerKind::VibroActuator,
        id_ranges: &[(21, 40)],
        sampling_rate_hz: None,
        axes: 1,
        value_range: VALUE_RANGE_10BIT,
        is_actuator: true,
    },
    TransducerSpec {
        kind: TransducerKind::LightSensor,
        id_ranges: &[(41, 41), (57, 57)],
        sampling_rate_hz: Some(1),
        axes: 1,
        value_range: VALUE_RANGE_10BIT,
        is_actuator: false,
    },
    TransducerSpec {
        kind: TransducerKind::Temperature,
        id_ranges: &[(72, 75)],
        sampling_rate_hz: Some(1),
        axes: 1,
        value_range: VALUE_RANGE_10BIT,
        is_actuator: false,
    },
    TransducerSpec {
        kind: TransducerKind::CoGas,
        id_ranges: &[(76, 78)],
        sampling_rate_hz: Some(1),
        axes: 1,
        value_range: VALUE_RANGE_10BIT,
        is_actuator: false,
    },
    TransducerSpec {
        kind: TransducerKind::Accelerometer,
        id_ranges: &[(83, 84)],
        sampling_rate_hz: Some(30),
        axes: 3,
        value_range: VALUE_RANGE_10BIT,
        is_actuator: false,
    },
    TransducerSpec {
        kind: TransducerKind::Flex,
        id_ranges: &[(85, 90)],
        sampling_rate_hz: Some(1),
        axes: 1,
        value_range: VALUE_RANGE_10BIT,
        is_actuator: false,
    },
];

fn kind_for_raw(raw: u8) -> Result<TransducerKind, RegistryError> {
    for spec in &SPECS {
        for &(lo, hi) in spec.id_ranges {
            if raw >= lo && raw <= hi {
                return Ok(spec.kind);
            }
        }
    }
    Err(RegistryError::UnassignedId(raw))
}

/// Resolves an ID to the unique kind whose reserved range contains it.
pub fn kind_for_id(raw: u8) -> Result<TransducerKind, RegistryError> {
    kind_for_raw(raw)
}

/// Default spec for a kind. Total over all seven kinds.
pub fn spec_for_kind(kind: TransducerKind) -> &'static TransducerSpec {
    SPECS.iter().find(|s| s.kind == kind).unwrap()
}

/// Resolves a whole layout, preserving order, rejecting unassigned and
/// duplicate IDs.
pub fn validate_layout(ids: &[u8]) -> Result<Vec<(TransducerId, TransducerKind)>, RegistryError> {
    let mut seen = [false; 256];
    let mut out = Vec::with_capacity(ids.len());
    for &raw in ids {
        if seen[raw as usize] {
            return Err(RegistryError::DuplicateId(raw));
        }
        seen[raw as usize] = true;
        let id = TransducerId::new(raw)?;
        out.push((id, id.kind()));
    }
    Ok(out)
}
