//! Run artifact layout and digesting.
//!
//! A `run` output directory holds:
//!
//! - `scenario.json`      resolved scenario (round-trips through the loader)
//! - `events.log`         one line per processed event (optional)
//! - `records.log`        receive time + canonical XML, one message per line
//! - `samples.csv`        node_id,tx_id,timestamp_ms,axis,value
//! - `energy_report.csv`  per-node phase totals and usage counters
//! - `run_summary.json`   manifest echo, counters and artifact digests
//!
//! The summary contains no wall-clock timings, so identical manifests yield
//! byte-identical artifacts; timing goes to stderr.

use crate::Manifest;
use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::Path;
use txnode::kernel::HashingSink;
use txnode::world::{run_simulation, Persistence, RunOptions};

#[derive(Serialize)]
struct ManifestEcho {
    scenario: String,
    seed: u64,
    horizon_ms: u64,
    profile: String,
}

#[derive(Serialize)]
struct RunSummary {
    manifest: ManifestEcho,
    events_processed: u64,
    event_log_lines: u64,
    messages_sent: u64,
    collected_samples: u64,
    emitted_samples: u64,
    ingested_samples: u64,
    records: u64,
    rejects: u64,
    buzzes_emitted: u64,
    commands_issued: u64,
    messages_lost: u64,
    server_rx_bytes: u64,
    digests: std::collections::BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path)
        .with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn run_and_persist(manifest: &Manifest, no_event_log: bool) -> Result<()> {
    std::fs::create_dir_all(&manifest.out)?;
    std::fs::write(manifest.out.join("scenario.json"), manifest.scenario.to_json())?;

    let event_log_path = manifest.out.join("events.log");
    let writer = if no_event_log {
        None
    } else {
        Some(std::io::BufWriter::new(std::fs::File::create(&event_log_path)?))
    };
    let mut sink = HashingSink::new(writer);

    let started = std::time::Instant::now();
    let opts = RunOptions {
        persistence: Persistence::Dir(manifest.out.clone()),
        heatmap_bin_minutes: None,
    };
    let out = run_simulation(
        &manifest.scenario,
        &manifest.params,
        manifest.seed,
        manifest.horizon_ms,
        &opts,
        &mut sink,
    )?;
    eprintln!(
        "simulated {} ms in {:?} ({} events)",
        manifest.horizon_ms,
        started.elapsed(),
        out.events_processed
    );
    let (event_digest, event_lines) = sink.finish()?;

    let energy_path = manifest.out.join("energy_report.csv");
    std::fs::write(&energy_path, out.energy.to_csv())?;

    let mut digests = std::collections::BTreeMap::new();
    digests.insert("events.log".to_string(), event_digest);
    for name in ["records.log", "samples.csv", "energy_report.csv"] {
        digests.insert(name.to_string(), sha256_file(&manifest.out.join(name))?);
    }

    let summary = RunSummary {
        manifest: ManifestEcho {
            scenario: manifest.scenario_source.clone(),
            seed: manifest.seed,
            horizon_ms: manifest.horizon_ms,
            profile: manifest.params.profile.clone(),
        },
        events_processed: out.events_processed,
        event_log_lines: event_lines,
        messages_sent: out.counters.messages_sent,
        collected_samples: out.counters.collected_samples,
        emitted_samples: out.counters.emitted_samples,
        ingested_samples: out.store_counters.samples,
        records: out.store_counters.records,
        rejects: out.store_counters.rejects,
        buzzes_emitted: out.buzzes_emitted,
        commands_issued: out.counters.commands_issued,
        messages_lost: out.counters.messages_lost,
        server_rx_bytes: out.server_rx_bytes,
        digests,
    };
    let summary_path = manifest.out.join("run_summary.json");
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    std::fs::write(&summary_path, json)?;

    for name in ["scenario.json", "events.log", "records.log", "samples.csv", "energy_report.csv", "run_summary.json"] {
        let path = manifest.out.join(name);
        if path.exists() {
            println!("wrote {}", path.display());
        }
    }
    println!(
        "run complete: {} records, {} samples, {} buzzes, event digest {}",
        summary.records,
        summary.ingested_samples,
        summary.buzzes_emitted,
        &summary.digests["events.log"][..16]
    );
    Ok(())
}
