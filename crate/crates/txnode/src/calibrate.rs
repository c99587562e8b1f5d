//! Fits the `zigbee-default` energy profile against the built-in home.
//!
//! Every energy debit is linear in the usage counters (frames, bytes on air,
//! MCU milliseconds, samples per kind), and none of the energy parameters
//! feed back into simulation behavior. One instrumented run of each network
//! therefore yields fixed coefficient vectors, after which candidate
//! parameters can be scored in closed form. The fit sweeps the radio wake
//! cost, the per-byte cost, the MCU draw and two sensing costs until:
//!
//! 1. the chair node's ratio sits inside a comfortable parity band,
//! 2. per-node ratios strictly decrease as transducer counts grow, with a
//!    relative margin, and
//! 3. the 24 h network ratio lands as close to 0.46 as the constraints allow,
//!
//! while the communicating phase keeps dominating sensing + processing on
//! every transmitting node. The winning values are committed as the
//! `zigbee-default` constants; re-running the fit reproduces them.

use crate::energy::{self, EnergyParams, NodeUsage};
use crate::kernel::NullSink;
use crate::registry::TransducerKind;
use crate::scenario::Scenario;
use crate::world::{run_simulation, RunOptions, WorldError};
use std::collections::BTreeMap;

/// Target network ratio for the fit.
pub const TARGET_NETWORK_RATIO: f64 = 0.46;

/// Usage coefficients extracted from one proposed + one traditional run.
#[derive(Debug, Clone)]
pub struct CalibrationData {
    pub horizon_ms: u64,
    pub proposed: Vec<(u16, NodeUsage)>,
    pub traditional: Vec<(u16, NodeUsage)>,
    /// Original node -> its traditional group.
    pub groups: BTreeMap<u16, Vec<u16>>,
    /// Original node -> static transducer count.
    pub counts: BTreeMap<u16, usize>,
}

/// Runs both networks once (counting only) and collects the coefficients.
/// The structural radio fields (overhead, frame size, data rate) come from
/// the profile and stay fixed during the sweep.
pub fn gather(
    scenario: &Scenario,
    structural: &EnergyParams,
    seed: u64,
    horizon_ms: u64,
) -> Result<CalibrationData, WorldError> {
    let mut sink = NullSink;
    let proposed =
        run_simulation(scenario, structural, seed, horizon_ms, &RunOptions::default(), &mut sink)?;
    let network = energy::traditional_equivalent(scenario);
    let traditional = run_simulation(
        &network.scenario,
        structural,
        seed,
        horizon_ms,
        &RunOptions::default(),
        &mut sink,
    )?;
    Ok(CalibrationData {
        horizon_ms,
        proposed: proposed.energy.nodes.iter().map(|n| (n.node_id, n.usage.clone())).collect(),
        traditional: traditional
            .energy
            .nodes
            .iter()
            .map(|n| (n.node_id, n.usage.clone()))
            .collect(),
        groups: network.groups,
        counts: scenario
            .nodes
            .iter()
            .map(|n| (n.node_id, n.transducers.len()))
            .collect(),
    })
}

/// The swept parameters; everything else is pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub wake_pj: u64,
    pub per_byte_pj: u64,
    pub mcu_active_uw: u64,
    /// Sensing cost for temperature, light and CO gas.
    pub sense_tlc_pj: u64,
    pub sense_accel_pj: u64,
}

const SENSE_PRESSURE_PJ: u64 = 2_000_000;
const SENSE_FLEX_PJ: u64 = 2_000_000;
const MCU_SLEEP_UW: u64 = 5;

impl Candidate {
    /// Full parameter set with the candidate rates plugged into the
    /// structural radio.
    pub fn params(&self, structural: &EnergyParams) -> EnergyParams {
        let mut params = structural.clone();
        params.profile = "zigbee-default".into();
        params.mcu_active_uw = self.mcu_active_uw;
        params.mcu_sleep_uw = MCU_SLEEP_UW;
        params.radio.wake_pj = self.wake_pj;
        params.radio.tx_pj_per_byte = self.per_byte_pj;
        params.radio.rx_pj_per_byte = self.per_byte_pj;
        params.sense_pj_per_sample = [
            (TransducerKind::Pressure, SENSE_PRESSURE_PJ),
            (TransducerKind::LightSensor, self.sense_tlc_pj),
            (TransducerKind::Temperature, self.sense_tlc_pj),
            (TransducerKind::CoGas, self.sense_tlc_pj),
            (TransducerKind::Accelerometer, self.sense_accel_pj),
            (TransducerKind::Flex, SENSE_FLEX_PJ),
        ]
        .into_iter()
        .collect();
        params
    }
}

/// Closed-form comparable energy (sensing + processing + communicating) of a
/// node under the given parameters; mirrors the meter debits exactly.
pub fn comparable_pj(usage: &NodeUsage, params: &EnergyParams) -> u128 {
    let radio = &params.radio;
    let mut pj = u128::from(radio.wake_pj) * u128::from(usage.frames_tx)
        + u128::from(radio.tx_pj_per_byte) * u128::from(usage.bytes_on_air_tx)
        + u128::from(radio.rx_pj_per_byte) * u128::from(usage.bytes_rx)
        + energy::power_debit_pj(params.mcu_active_uw, usage.mcu_active_ms)
        + energy::power_debit_pj(params.mcu_sleep_uw, usage.mcu_sleep_ms);
    for (&kind, &samples) in &usage.samples_by_kind {
        pj += energy::sense_debit_pj(params, kind, samples);
    }
    pj
}

fn communicating_pj(usage: &NodeUsage, params: &EnergyParams) -> u128 {
    let radio = &params.radio;
    u128::from(radio.wake_pj) * u128::from(usage.frames_tx)
        + u128::from(radio.tx_pj_per_byte) * u128::from(usage.bytes_on_air_tx)
        + u128::from(radio.rx_pj_per_byte) * u128::from(usage.bytes_rx)
}

/// How a candidate scores against the acceptance targets.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub network_ratio: f64,
    /// (node, static transducer count, ratio), in node order.
    pub per_node: Vec<(u16, usize, f64)>,
    pub parity_ratio: f64,
    /// Smallest relative gap over all count-ordered pairs; negative when the
    /// ordering is violated.
    pub min_order_margin: f64,
    pub domination_ok: bool,
}

impl Assessment {
    pub fn feasible(&self) -> bool {
        self.parity_ratio >= 0.96
            && self.parity_ratio <= 1.04
            && self.min_order_margin >= 0.05
            && self.domination_ok
            && self.network_ratio >= 0.41
            && self.network_ratio <= 0.51
    }
}

/// Scores one candidate in closed form.
pub fn assess(candidate: &Candidate, data: &CalibrationData, structural: &EnergyParams) -> Assessment {
    let params = candidate.params(structural);
    let trad: BTreeMap<u16, &NodeUsage> =
        data.traditional.iter().map(|(id, u)| (*id, u)).collect();

    let mut per_node = Vec::new();
    let mut network_p = 0u128;
    let mut network_t = 0u128;
    let mut domination_ok = true;
    let mut parity_ratio = f64::NAN;

    for (node_id, usage) in &data.proposed {
        let p = comparable_pj(usage, &params);
        network_p += p;
        let t: u128 = data.groups[node_id]
            .iter()
            .map(|id| comparable_pj(trad[id], &params))
            .sum();
        let ratio = p as f64 / t as f64;
        let count = data.counts[node_id];
        per_node.push((*node_id, count, ratio));
        // The chair-class check: any node pairing exactly one sensor with
        // actuators.
        if count == 2 && usage.samples_by_kind.contains_key(&TransducerKind::Pressure)
            && usage.samples_by_kind.len() == 2
        {
            parity_ratio = ratio;
        }
    }
    for (_, usage) in data.proposed.iter().chain(&data.traditional) {
        if usage.messages_tx > 0 {
            let comm = communicating_pj(usage, &params);
            let rest = comparable_pj(usage, &params) - comm;
            domination_ok &= comm > rest;
        }
    }
    for (_, usage) in &data.traditional {
        network_t += comparable_pj(usage, &params);
    }

    // Orders ratios by transducer count: every node with a strictly larger
    // count must have a strictly smaller ratio, by a relative margin.
    let mut min_order_margin = f64::INFINITY;
    for (i, &(_, ci, ri)) in per_node.iter().enumerate() {
        for &(_, cj, rj) in per_node.iter().skip(i + 1) {
            let (small, big) = if ci < cj { (ri, rj) } else if cj < ci { (rj, ri) } else { continue };
            // `small` is the ratio of the node with fewer transducers and
            // must exceed `big`.
            min_order_margin = min_order_margin.min((small - big) / small.abs().max(f64::MIN_POSITIVE));
        }
    }

    Assessment {
        network_ratio: network_p as f64 / network_t as f64,
        per_node,
        parity_ratio,
        min_order_margin,
        domination_ok,
    }
}

/// Grid sweep plus local refinement. Returns the best candidate and its
/// closed-form assessment.
pub fn fit(data: &CalibrationData, structural: &EnergyParams) -> (Candidate, Assessment) {
    let uj = 1_000_000u64; // pJ per µJ
    let mut best: Option<(f64, Candidate, Assessment)> = None;

    let consider = |c: Candidate, best: &mut Option<(f64, Candidate, Assessment)>| {
        let a = assess(&c, data, structural);
        if !a.feasible() {
            return;
        }
        // Primary: distance to the target ratio. Secondary: prefer wide
        // ordering margins and a parity ratio near 1.
        let score = (a.network_ratio - TARGET_NETWORK_RATIO).abs()
            + 0.02 * (1.0 - a.min_order_margin.min(0.2) / 0.2)
            + 0.02 * (a.parity_ratio - 1.0).abs();
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            *best = Some((score, c, a));
        }
    };

    for wake_uj in (1200..=2600).step_by(100) {
        for per_byte_centi_uj in (20..=80).step_by(5) {
            for mcu_uw in (60..=140).step_by(10) {
                for tlc_uj in (150..=450).step_by(50) {
                    for accel_uj in (5..=45).step_by(10) {
                        consider(
                            Candidate {
                                wake_pj: wake_uj * uj,
                                per_byte_pj: per_byte_centi_uj * uj / 100,
                                mcu_active_uw: mcu_uw,
                                sense_tlc_pj: tlc_uj * uj,
                                sense_accel_pj: accel_uj * uj,
                            },
                            &mut best,
                        );
                    }
                }
            }
        }
    }
    let coarse = best.clone().expect("grid must contain a feasible candidate").1;

    // Refine around the coarse winner.
    let span = |v: u64, lo: u64, step: u64, n: u64| -> Vec<u64> {
        (0..=2 * n)
            .filter_map(|i| (v + i * step).checked_sub(n * step))
            .filter(|&x| x >= lo)
            .collect()
    };
    for wake in span(coarse.wake_pj, uj, 25 * uj, 4) {
        for per_byte in span(coarse.per_byte_pj, uj / 100, uj / 100, 5) {
            for mcu in span(coarse.mcu_active_uw, 10, 5, 4) {
                for tlc in span(coarse.sense_tlc_pj, 10 * uj, 10 * uj, 4) {
                    consider(
                        Candidate {
                            wake_pj: wake,
                            per_byte_pj: per_byte,
                            mcu_active_uw: mcu,
                            sense_tlc_pj: tlc,
                            sense_accel_pj: coarse.sense_accel_pj,
                        },
                        &mut best,
                    );
                }
            }
        }
    }

    let (_, candidate, assessment) = best.expect("refinement keeps at least the coarse winner");
    (candidate, assessment)
}

/// Human-readable fit report.
pub fn report(candidate: &Candidate, assessment: &Assessment) -> String {
    let mut out = String::new();
    out.push_str("fitted zigbee-default parameters:\n");
    out.push_str(&format!("  radio.wake_pj        = {}\n", candidate.wake_pj));
    out.push_str(&format!("  radio.tx/rx per byte = {} pJ\n", candidate.per_byte_pj));
    out.push_str(&format!("  mcu_active_uw        = {}\n", candidate.mcu_active_uw));
    out.push_str(&format!("  sense temp/light/co  = {} pJ/sample\n", candidate.sense_tlc_pj));
    out.push_str(&format!("  sense accelerometer  = {} pJ/sample\n", candidate.sense_accel_pj));
    out.push_str("achieved:\n");
    out.push_str(&format!("  network ratio        = {:.4}\n", assessment.network_ratio));
    out.push_str(&format!("  chair parity ratio   = {:.4}\n", assessment.parity_ratio));
    out.push_str(&format!("  min ordering margin  = {:.4}\n", assessment.min_order_margin));
    out.push_str(&format!("  domination holds     = {}\n", assessment.domination_ok));
    for (node, count, ratio) in &assessment.per_node {
        out.push_str(&format!("  node {node} ({count} transducers): ratio {ratio:.4}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::zigbee_default;
    use crate::scenario::builtin_home;

    /// Closed-form accounting must reproduce the meters exactly.
    #[test]
    fn closed_form_matches_metered_energy() {
        let mut home = builtin_home();
        home.horizon_ms = 3_600_000;
        let params = zigbee_default();
        let out = run_simulation(
            &home,
            &params,
            7,
            home.horizon_ms,
            &RunOptions::default(),
            &mut NullSink,
        )
        .unwrap();
        for node in &out.energy.nodes {
            assert_eq!(
                comparable_pj(&node.usage, &params),
                node.meter.comparable_pj(),
                "node {} closed form diverges from meter",
                node.node_id
            );
        }
    }
}
