//! ZigBee-like link model: framing overhead, airtime, and per-byte /
//! per-frame energy costs.
//!
//! No RF physics is modeled. The link is characterized entirely by
//! parameters: per-frame overhead bytes, maximum frame payload, data rate,
//! and energy rates. Energy is tracked in integer picojoules so that a 24 h
//! accumulation is exact; 1 µW sustained for 1 ms equals 1000 pJ.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadioError {
    #[error("radio parameter {field} must be positive")]
    NonPositive { field: &'static str },
}

/// Link parameters. The energy fields are calibration values, not datasheet
/// claims; see the named profiles in [`crate::energy`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Header/trailer bytes added to every frame on air.
    pub overhead_bytes: u32,
    /// Largest frame payload; longer messages fragment.
    pub max_payload_bytes: u32,
    pub data_rate_bps: u32,
    pub tx_pj_per_byte: u64,
    pub rx_pj_per_byte: u64,
    /// Transmitter startup cost, charged once per frame on the sender.
    pub wake_pj: u64,
    /// Frame loss probability in parts per million. 0 = lossless.
    pub loss_ppm: u32,
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), RadioError> {
        if self.max_payload_bytes == 0 {
            return Err(RadioError::NonPositive { field: "max_payload_bytes" });
        }
        if self.data_rate_bps == 0 {
            return Err(RadioError::NonPositive { field: "data_rate_bps" });
        }
        Ok(())
    }
}

/// One frame on the air.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame<'a> {
    pub src: u16,
    pub dst: crate::kernel::Dest,
    pub payload: &'a [u8],
    pub time_sent_ms: u64,
}

/// Splits a payload into frame-sized slices. A zero-byte payload still takes
/// one (empty) frame: heartbeats are framed too.
pub fn fragment<'a>(payload: &'a [u8], params: &RadioParams) -> Vec<&'a [u8]> {
    let max = params.max_payload_bytes as usize;
    if payload.is_empty() {
        return vec![payload];
    }
    payload.chunks(max).collect()
}

/// Cost of transmitting one message of `payload_len` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxCost {
    pub frames: u64,
    /// Payload plus per-frame overhead.
    pub bytes_on_air: u64,
    pub energy_pj: u128,
    pub airtime_ms: u64,
}

pub fn tx_cost(payload_len: usize, params: &RadioParams) -> TxCost {
    let len = payload_len as u64;
    let frames = if len == 0 {
        1
    } else {
        len.div_ceil(u64::from(params.max_payload_bytes))
    };
    let bytes_on_air = len + frames * u64::from(params.overhead_bytes);
    let energy_pj = u128::from(frames) * u128::from(params.wake_pj)
        + u128::from(bytes_on_air) * u128::from(params.tx_pj_per_byte);
    let bits = bytes_on_air * 8;
    let airtime_ms = (bits * 1000).div_ceil(u64::from(params.data_rate_bps));
    TxCost { frames, bytes_on_air, energy_pj, airtime_ms }
}

/// Receive-side cost: per-byte only, no wake.
pub fn rx_cost_pj(bytes_on_air: u64, params: &RadioParams) -> u128 {
    u128::from(bytes_on_air) * u128::from(params.rx_pj_per_byte)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_params() -> RadioParams {
        RadioParams {
            overhead_bytes: 11,
            max_payload_bytes: 100,
            data_rate_bps: 250_000,
            tx_pj_per_byte: 450_000,
            rx_pj_per_byte: 450_000,
            wake_pj: 1_300_000_000,
            loss_ppm: 0,
        }
    }

    /// Per-byte cost derived from "3 J per 1 KB": 1024 bytes must cost
    /// exactly 3 J with no wake or overhead.
    fn pottie_like() -> RadioParams {
        RadioParams {
            overhead_bytes: 0,
            max_payload_bytes: 1024,
            data_rate_bps: 250_000,
            tx_pj_per_byte: 2_929_687_500,
            rx_pj_per_byte: 2_929_687_500,
            wake_pj: 0,
            loss_ppm: 0,
        }
    }

    #[test]
    fn fragmentation_examples() {
        let params = test_params();
        let slices = fragment(&[], &params);
        assert_eq!(slices, vec![&[] as &[u8]]);

        let payload = vec![7u8; 250];
        let slices = fragment(&payload, &params);
        let lens: Vec<usize> = slices.iter().map(|s| s.len()).collect();
        assert_eq!(lens, vec![100, 100, 50]);

        let exact = vec![7u8; 200];
        assert_eq!(fragment(&exact, &params).len(), 2);
    }

    #[test]
    fn fragments_reassemble_exactly() {
        let params = test_params();
        let mut rng = crate::util::SplitMix64::new(0xf00d);
        for _ in 0..200 {
            let len = rng.next_below(1000) as usize;
            let payload: Vec<u8> = (0..len).map(|_| rng.next_below(256) as u8).collect();
            let mut rebuilt = Vec::new();
            for slice in fragment(&payload, &params) {
                assert!(slice.len() <= params.max_payload_bytes as usize);
                rebuilt.extend_from_slice(slice);
            }
            assert_eq!(rebuilt, payload);
        }
    }

    #[test]
    fn one_kilobyte_costs_three_joules_on_reference_profile() {
        let cost = tx_cost(1024, &pottie_like());
        assert_eq!(cost.frames, 1);
        assert_eq!(cost.energy_pj, 3_000_000_000_000); // 3 J in pJ
    }

    #[test]
    fn zero_byte_frame_costs_wake_only() {
        let mut params = test_params();
        params.overhead_bytes = 0;
        let cost = tx_cost(0, &params);
        assert_eq!(cost.frames, 1);
        assert_eq!(cost.energy_pj, u128::from(params.wake_pj));
    }

    #[test]
    fn energy_is_strictly_monotone_in_payload() {
        let params = test_params();
        let mut last = tx_cost(0, &params).energy_pj;
        for len in 1..400usize {
            let e = tx_cost(len, &params).energy_pj;
            assert!(e > last, "energy not increasing at len {len}");
            last = e;
        }
    }

    #[test]
    fn per_frame_debits_sum_to_closed_form() {
        let params = test_params();
        let mut rng = crate::util::SplitMix64::new(42);
        for _ in 0..200 {
            let len = rng.next_below(2000) as usize;
            let payload = vec![0u8; len];
            // Independent accounting route: sum the per-frame costs.
            let mut sum = 0u128;
            let mut frames = 0u64;
            for slice in fragment(&payload, &params) {
                frames += 1;
                sum += u128::from(params.wake_pj)
                    + u128::from(slice.len() as u64 + u64::from(params.overhead_bytes))
                        * u128::from(params.tx_pj_per_byte);
            }
            let cost = tx_cost(len, &params);
            assert_eq!(cost.frames, frames);
            assert_eq!(cost.energy_pj, sum);
            assert_eq!(
                cost.energy_pj,
                u128::from(frames) * u128::from(params.wake_pj)
                    + u128::from(cost.bytes_on_air) * u128::from(params.tx_pj_per_byte)
            );
        }
    }

    #[test]
    fn airtime_scales_with_bytes() {
        let params = test_params();
        // 100 B payload + 11 B overhead = 888 bits -> 3.552 ms -> 4 ms.
        assert_eq!(tx_cost(100, &params).airtime_ms, 4);
        assert!(tx_cost(1000, &params).airtime_ms > tx_cost(100, &params).airtime_ms);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = test_params();
        p.max_payload_bytes = 0;
        assert_eq!(p.validate(), Err(RadioError::NonPositive { field: "max_payload_bytes" }));
        let mut p = test_params();
        p.data_rate_bps = 0;
        assert!(p.validate().is_err());
    }
}
