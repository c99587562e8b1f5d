//! Simulation library for hybrid wired-wireless transducer-node networks.
//!
//! A *transducer node* is one microcontroller plus one radio hosting any
//! number of plug-and-play transducers (sensors and actuators) over a wired
//! on-node bus. Nodes batch their sensor readings into XML measurement
//! messages, report them to a central server over a ZigBee-like link, and
//! accept XML control messages that drive their actuators.
//!
//! The crate provides:
//!
//! - [`registry`]: the catalog of transducer kinds and their reserved ID ranges
//! - [`bus`]: the emulated on-node bus with hot-plug attach/detach events
//! - [`node`]: the node state machine (connectivity, collection, reporting)
//! - [`protocol`]: the canonical XML codec for measurement and control messages
//! - [`kernel`]: a deterministic discrete-event engine (ms clock, seeded RNG)
//! - [`radio`]: framing, airtime and per-byte/per-frame energy costs
//! - [`energy`]: per-node energy metering and the clustered-vs-traditional
//!   network comparison
//! - [`scenario`]: environment signal generators and the built-in 6-node home
//! - [`server`]: message ingestion, the sit-detection rule, heatmap export
//! - [`world`]: glue that wires all of the above into a runnable simulation
//!
//! Everything is deterministic: identical (scenario, seed, horizon, energy
//! profile) inputs produce byte-identical event logs, stores and reports.

pub mod bus;
pub mod calibrate;
pub mod energy;
pub mod kernel;
pub mod node;
pub mod protocol;
pub mod radio;
pub mod registry;
pub mod scenario;
pub mod server;
pub mod util;
pub mod world;

pub use registry::{TransducerId, TransducerKind};
