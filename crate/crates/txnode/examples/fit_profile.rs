use txnode::calibrate;
use txnode::energy::zigbee_default;
use txnode::scenario::builtin_home;

fn main() {
    let home = builtin_home();
    let structural = zigbee_default();
    let start = std::time::Instant::now();
    let data = calibrate::gather(&home, &structural, home.seed, home.horizon_ms).unwrap();
    eprintln!("gather: {:?}", start.elapsed());
    let t2 = std::time::Instant::now();
    let (candidate, assessment) = calibrate::fit(&data, &structural);
    eprintln!("fit: {:?}", t2.elapsed());
    print!("{}", calibrate::report(&candidate, &assessment));
}
