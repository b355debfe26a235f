//! Runs the digit transfer experiment for a few seeds and prints mean metrics.
//!
//! Usage: `cargo run --release --example digits -- [seeds] [lambda] [bandwidth]`

use ftucker::experiment::run_digits;
use ftucker::io::ExperimentConfig;

fn main() -> ftucker::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut cfg = ExperimentConfig::default();
    if let Some(l) = args.get(2).and_then(|s| s.parse().ok()) {
        cfg.lambda = l;
    }
    if let Some(b) = args.get(3).and_then(|s| s.parse().ok()) {
        cfg.bandwidth = b;
    }
    for seed in 0..seeds {
        cfg.seed = seed;
        let t = std::time::Instant::now();
        let r = run_digits(&cfg)?;
        println!(
            "seed {seed}: equal acc hosvd {:.3} ftd {:.3} | transfer acc hosvd {:.3} ftd {:.3} | f1 {:.3}/{:.3} | fit {:.2e} | {:.1}s",
            r.equal_accuracy.mean_hosvd(),
            r.equal_accuracy.mean_ftd(),
            r.transfer_accuracy.mean_hosvd(),
            r.transfer_accuracy.mean_ftd(),
            r.transfer_macro_f1.mean_hosvd(),
            r.transfer_macro_f1.mean_ftd(),
            r.ftd_fit_error,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
