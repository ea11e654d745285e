//! Times a single simulate-and-fit replicate and prints the structural summary.
use rbnma::sampler::SamplerConfig;
use rbnma::simulation::{basic_network, fit_pipeline, simulate_network, structural_truth, RecoveryConfig, SimulationTruth};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let warmup: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let iterations: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let truth = SimulationTruth::basic();
    let mut config = RecoveryConfig::default();
    config.nma.sampler = SamplerConfig { warmup, iterations, ..SamplerConfig::quick(seed) };
    let ipd_only = args.get(4).is_some_and(|s| s == "ipd");
    let plans: Vec<_> = basic_network(1500).into_iter().filter(|p| !ipd_only || p.kind == rbnma::simulation::StudyKind::Ipd).collect();
    let net = simulate_network(&truth, &plans, seed).unwrap();
    let t0 = std::time::Instant::now();
    let post = fit_pipeline(&truth, &net, &config, seed).unwrap();
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    let t = structural_truth(&truth, &post);
    for p in &post.diagnostics.parameters {
        if let Some(v) = t.get(&p.name) {
            println!("{:<12} truth {:>7.3} mean {:>7.3} [{:>7.3}, {:>7.3}] rhat {:.3} ess {:.0}", p.name, v, p.summary.mean, p.summary.q025, p.summary.q975, p.rhat, p.ess_bulk);
        }
    }
}
