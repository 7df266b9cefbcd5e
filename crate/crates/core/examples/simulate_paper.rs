//! Simulate the reference measurement and summarize what reached the detectors.
//!
//! cargo run --release --example simulate_paper

use fockherald::config::RunConfig;
use fockherald::simgen::{generate, Channel};

fn main() -> fockherald::error::Result<()> {
    let mut cfg = RunConfig::paper();
    cfg.experiment.duration = 0.25;
    let t = std::time::Instant::now();
    let sim = generate(&cfg.experiment)?;
    let took = t.elapsed().as_secs_f64();

    let truth = &sim.truth.electrons;
    let emitted: u64 = truth.iter().map(|e| e.true_k as u64).sum();
    let recorded = truth.iter().filter(|e| e.recorded).count();
    println!(
        "{} electrons in {:.3} s ({:.1} M/s simulated)",
        truth.len(),
        cfg.experiment.duration,
        truth.len() as f64 / took / 1e6
    );
    println!("  photons emitted          {emitted}");
    println!("  electrons recorded       {recorded}");
    for c in [Channel::A, Channel::B] {
        let origins = match c {
            Channel::A => &sim.truth.origin_a,
            Channel::B => &sim.truth.origin_b,
        };
        let dark = origins.iter().filter(|o| o.is_none()).count();
        println!(
            "  channel {c:?}: {} detections, {dark} dark, {:.1} /s",
            origins.len(),
            origins.len() as f64 / cfg.experiment.duration
        );
    }
    let mut by_k = [0usize; 5];
    for e in truth {
        by_k[(e.true_k as usize).min(4)] += 1;
    }
    println!("  photon number histogram  {by_k:?}");
    Ok(())
}
