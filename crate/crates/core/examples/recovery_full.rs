//! Runs the 20-replicate recovery study on the basic network.
use rbnma::sampler::SamplerConfig;
use rbnma::simulation::{basic_network, recovery_report, RecoveryConfig, SimulationTruth};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let replicates: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut config = RecoveryConfig { replicates, ..Default::default() };
    config.nma.sampler = SamplerConfig::quick(0);
    let t0 = std::time::Instant::now();
    let report = recovery_report(&SimulationTruth::basic(), &basic_network(1500), &config).unwrap();
    print!("{}", report.to_tsv());
    for r in &report.replicates {
        println!("rep {} max_rhat {:.3}", r.replicate, r.max_rhat);
    }
    println!("elapsed {:.0}s", t0.elapsed().as_secs_f64());
}
