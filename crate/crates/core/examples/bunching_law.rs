//! Unheralded photon bunching shrinks as the electron current grows.
//!
//! cargo run --release --example bunching_law

use fockherald::config::RunConfig;
use fockherald::model::{predicted_bunching, CouplingSpec};
use fockherald::simgen::{generate, Channel};
use fockherald::stats::{g2_unheralded, G2Options};

fn main() -> fockherald::error::Result<()> {
    let bin = 50e-9;
    let mut cfg = RunConfig::paper();
    cfg.experiment.physics.coupling = CouplingSpec::fixed(1.0);
    for ch in [&mut cfg.experiment.channel_a, &mut cfg.experiment.channel_b] {
        ch.dead_time = 0.0;
        ch.dark_rate = 0.0;
    }
    println!(
        "{:>10} {:>8} {:>16} {:>10}",
        "rate /s", "I*bin", "g2(0) measured", "predicted"
    );
    for rate in [1e7, 2e7, 4e7, 8e7] {
        cfg.experiment.electron_rate = rate;
        cfg.experiment.duration = 2e6 / rate;
        let s = generate(&cfg.experiment)?.events;
        let mut opts = G2Options::new(bin, 1e-6);
        opts.duration = Some(cfg.experiment.duration);
        let g = g2_unheralded(
            &s.photon_times(Channel::A),
            &s.photon_times(Channel::B),
            &opts,
        )?;
        let (v, e) = g.at(0.0).expect("zero bin");
        println!(
            "{rate:10.1e} {:8.1} {v:9.3} ± {e:.3} {:10.3}",
            rate * bin,
            predicted_bunching(rate, bin)?
        );
    }
    Ok(())
}
