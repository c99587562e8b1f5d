//! Operator entry point: run simulations, compare network energy, export
//! heatmaps, fuzz the codec, validate scenarios, refit the energy profile.
//!
//! Every subcommand is deterministic given its flags and seed. All
//! behavior-affecting settings are flags; the only environment variable is
//! `TXNODE_OUT_DIR`, the default output directory.
//!
//! Exit codes: 0 success, 1 validation/configuration error, 2 property or
//! acceptance failure.

mod artifacts;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use txnode::scenario::{builtin_home, load_scenario, Scenario};
use txnode::{calibrate, energy, protocol, server, world};

#[derive(Parser)]
#[command(name = "txnode", version, about = "Deterministic simulator for reconfigurable transducer-node networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunManifestArgs {
    /// Scenario: `builtin-home` or a path to a scenario JSON file.
    #[arg(long, default_value = "builtin-home")]
    scenario: String,
    /// Simulated hours; shorthand for --horizon-ms H*3600000.
    #[arg(long, conflicts_with = "horizon_ms")]
    hours: Option<u64>,
    /// Simulated horizon in milliseconds (defaults to the scenario's own).
    #[arg(long)]
    horizon_ms: Option<u64>,
    /// RNG seed (defaults to the scenario's own).
    #[arg(long)]
    seed: Option<u64>,
    /// Energy profile: `zigbee-default`, `pottie-reference`, or a JSON path.
    #[arg(long, default_value = "zigbee-default")]
    profile: String,
    /// Output directory (falls back to $TXNODE_OUT_DIR, then `./out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one network and write event log, store and energy report.
    Run {
        #[command(flatten)]
        manifest: RunManifestArgs,
        /// Skip writing events.log (its digest is still computed).
        #[arg(long)]
        no_event_log: bool,
    },
    /// Run the clustered network and its one-transducer-per-node equivalent
    /// on the same traces, and write per-node and network energy ratios.
    CompareEnergy {
        #[command(flatten)]
        manifest: RunManifestArgs,
    },
    /// Export a heatmap (CSV + PGM) from a finished run's artifacts.
    ExportHeatmap {
        /// Directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        /// Bin width in minutes; must divide the run horizon.
        #[arg(long, default_value_t = 60)]
        bin_minutes: u32,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Round-trip and mutation-rejection property run over the XML codec.
    FuzzProtocol {
        #[arg(long, default_value_t = 1000)]
        iterations: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Where to write counterexample repro files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scenario file tools.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
    /// Re-fit the zigbee-default energy profile from the built-in home and
    /// print the resulting parameters.
    Calibrate {
        #[arg(long, default_value_t = 24)]
        hours: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Line-framed XML ingest over TCP (one measurement document per line).
    Serve {
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: String,
        /// Exit after the first connection closes.
        #[arg(long)]
        once: bool,
        /// Persist records.log and samples.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Parse and fully validate a scenario file.
    Validate { file: PathBuf },
    /// Print the built-in six-node home scenario as JSON.
    Builtin,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are validation errors.
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { manifest, no_event_log } => cmd_run(&manifest, no_event_log),
        Command::CompareEnergy { manifest } => cmd_compare_energy(&manifest),
        Command::ExportHeatmap { run, bin_minutes, out } => {
            cmd_export_heatmap(&run, bin_minutes, out.as_deref())
        }
        Command::FuzzProtocol { iterations, seed, out } => {
            cmd_fuzz_protocol(iterations, seed, out.as_deref())
        }
        Command::Scenario { command } => match command {
            ScenarioCommand::Validate { file } => cmd_scenario_validate(&file),
            ScenarioCommand::Builtin => {
                print!("{}", String::from_utf8_lossy(&builtin_home().to_json()));
                Ok(0)
            }
        },
        Command::Calibrate { hours, seed } => cmd_calibrate(hours, seed),
        Command::Serve { addr, once, out } => cmd_serve(&addr, once, out.as_deref()),
    }
}

/// A fully resolved run manifest.
struct Manifest {
    scenario: Scenario,
    scenario_source: String,
    params: energy::EnergyParams,
    seed: u64,
    horizon_ms: u64,
    out: PathBuf,
}

fn resolve_manifest(args: &RunManifestArgs) -> Result<Manifest> {
    let (scenario, source) = if args.scenario == "builtin-home" {
        (builtin_home(), "builtin-home".to_string())
    } else {
        let bytes = std::fs::read(&args.scenario)
            .with_context(|| format!("reading scenario '{}'", args.scenario))?;
        let scenario = load_scenario(&bytes)?;
        (scenario, args.scenario.clone())
    };
    let params = match energy::profile(&args.profile) {
        Some(p) => p,
        None => {
            let bytes = std::fs::read(&args.profile)
                .with_context(|| format!("'{}' is neither a built-in profile nor a readable file", args.profile))?;
            serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing energy profile '{}'", args.profile))?
        }
    };
    params.radio.validate()?;
    let horizon_ms = match (args.hours, args.horizon_ms) {
        (Some(h), _) => h * 3_600_000,
        (None, Some(ms)) => ms,
        (None, None) => scenario.horizon_ms,
    };
    let seed = args.seed.unwrap_or(scenario.seed);
    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os("TXNODE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Manifest { scenario, scenario_source: source, params, seed, horizon_ms, out })
}

fn cmd_run(args: &RunManifestArgs, no_event_log: bool) -> Result<i32> {
    let manifest = resolve_manifest(args)?;
    artifacts::run_and_persist(&manifest, no_event_log)?;
    Ok(0)
}

fn cmd_compare_energy(args: &RunManifestArgs) -> Result<i32> {
    let manifest = resolve_manifest(args)?;
    std::fs::create_dir_all(&manifest.out)?;
    let started = std::time::Instant::now();
    let (report, proposed, traditional) = world::run_comparison(
        &manifest.scenario,
        &manifest.params,
        manifest.seed,
        manifest.horizon_ms,
    )?;
    eprintln!("simulated both networks in {:?}", started.elapsed());

    let paths = [
        ("comparison.csv", report.to_csv()),
        ("comparison.txt", report.summary()),
        ("energy_proposed.csv", proposed.energy.to_csv()),
        ("energy_traditional.csv", traditional.energy.to_csv()),
    ];
    for (name, content) in &paths {
        let path = manifest.out.join(name);
        std::fs::write(&path, content)?;
        println!("wrote {}", path.display());
    }
    print!("{}", report.summary());
    Ok(0)
}

fn cmd_export_heatmap(run_dir: &Path, bin_minutes: u32, out: Option<&Path>) -> Result<i32> {
    let summary_path = run_dir.join("run_summary.json");
    let summary: serde_json::Value = serde_json::from_slice(
        &std::fs::read(&summary_path)
            .with_context(|| format!("reading {}", summary_path.display()))?,
    )?;
    let horizon_ms = summary["manifest"]["horizon_ms"]
        .as_u64()
        .ok_or_else(|| anyhow!("run summary lacks manifest.horizon_ms"))?;
    let samples_path = run_dir.join("samples.csv");
    let file = std::fs::File::open(&samples_path)
        .with_context(|| format!("reading {}", samples_path.display()))?;
    let heatmap =
        server::heatmap_from_samples_csv(std::io::BufReader::new(file), bin_minutes, horizon_ms)?;

    let out = out.unwrap_or(run_dir);
    std::fs::create_dir_all(out)?;
    let csv_path = out.join("heatmap.csv");
    let pgm_path = out.join("heatmap.pgm");
    std::fs::write(&csv_path, heatmap.to_csv())?;
    std::fs::write(&pgm_path, heatmap.to_pgm())?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", pgm_path.display());
    println!(
        "{} channels x {} bins of {} min",
        heatmap.row_labels.len(),
        heatmap.bin_labels.len(),
        heatmap.bin_minutes
    );
    Ok(0)
}

fn cmd_fuzz_protocol(iterations: u64, seed: u64, out: Option<&Path>) -> Result<i32> {
    if iterations == 0 {
        bail!("--iterations must be positive");
    }
    let report = protocol::fuzz::run(iterations, seed);
    println!(
        "fuzz: {} round-trips, {} mutants rejected, {} failures (seed {seed})",
        report.round_trips,
        report.mutants_rejected,
        report.failures.len()
    );
    if report.passed() {
        return Ok(0);
    }
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("TXNODE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    for (i, failure) in report.failures.iter().enumerate().take(16) {
        let path = out.join(format!("fuzz_repro_{i}.xml"));
        std::fs::write(&path, &failure.document)?;
        println!(
            "counterexample ({:?} case {}): {} -> {}",
            failure.kind,
            failure.case,
            failure.detail,
            path.display()
        );
    }
    Ok(2)
}

fn cmd_scenario_validate(file: &Path) -> Result<i32> {
    let bytes = std::fs::read(file).with_context(|| format!("reading {}", file.display()))?;
    match load_scenario(&bytes) {
        Ok(scenario) => {
            println!(
                "ok: {} nodes, {} transducers, {} channels, {} hotplug events, {} rules",
                scenario.nodes.len(),
                scenario.static_transducer_count(),
                scenario.channels.len(),
                scenario.hotplug.len(),
                scenario.rules.len()
            );
            Ok(0)
        }
        Err(e) => {
            eprintln!("invalid scenario: {e}");
            Ok(1)
        }
    }
}

fn cmd_calibrate(hours: u64, seed: u64) -> Result<i32> {
    let mut home = builtin_home();
    home.horizon_ms = hours * 3_600_000;
    let structural = energy::zigbee_default();
    eprintln!("gathering usage coefficients over {hours} h ...");
    let data = calibrate::gather(&home, &structural, seed, home.horizon_ms)?;
    let (candidate, assessment) = calibrate::fit(&data, &structural);
    print!("{}", calibrate::report(&candidate, &assessment));
    let committed = energy::zigbee_default();
    let matches = committed.radio.wake_pj == candidate.wake_pj
        && committed.radio.tx_pj_per_byte == candidate.per_byte_pj
        && committed.mcu_active_uw == candidate.mcu_active_uw;
    println!(
        "committed zigbee-default {} this fit",
        if matches { "matches" } else { "differs from" }
    );
    Ok(0)
}

fn cmd_serve(addr: &str, once: bool, out: Option<&Path>) -> Result<i32> {
    let listener = std::net::TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    println!("listening on {local}");
    // The line is the contract for scripts driving this front-end.
    use std::io::Write;
    std::io::stdout().flush()?;

    let rule = server::RuleEngine::default();
    let mut store = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            server::Store::persistent(dir, rule)?
        }
        None => server::Store::counting(rule),
    };
    for stream in listener.incoming() {
        let stream = stream?;
        let (accepted, rejected) = server::serve_connection(stream, &mut store)?;
        println!("connection closed: {accepted} accepted, {rejected} rejected");
        std::io::stdout().flush()?;
        if once {
            break;
        }
    }
    store.flush()?;
    Ok(0)
}
