use txnode::energy::zigbee_default;
use txnode::scenario::builtin_home;
use txnode::world::run_comparison;

fn main() {
    let home = builtin_home();
    let params = zigbee_default();
    let start = std::time::Instant::now();
    let (report, proposed, traditional) = run_comparison(&home, &params, 7, home.horizon_ms).unwrap();
    let elapsed = start.elapsed();
    println!("wall: {:?}", elapsed);
    println!("proposed events: {}", proposed.events_processed);
    println!("traditional events: {}", traditional.events_processed);
    println!("collected (proposed): {}", proposed.counters.collected_samples);
    println!("ingested (proposed): {}", proposed.store_counters.samples);
    println!("network ratio: {:.4}", report.network_ratio);
    for n in &report.per_node {
        println!("  node {} ({} tx): ratio {:.4}", n.node_id, n.transducer_count, n.ratio);
    }
}
