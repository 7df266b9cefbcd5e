//! Intrinsic heralding efficiencies and coincidence-to-accidental ratios.
//!
//! cargo run --release --example heralding_efficiency

use fockherald::analysis::Analysis;
use fockherald::config::RunConfig;
use fockherald::simgen::generate;

fn main() -> fockherald::error::Result<()> {
    let cfg = RunConfig::paper();
    let an = Analysis::new(&generate(&cfg.experiment)?.events, &cfg, 0)?;

    let eff = an.efficiencies()?;
    for (name, e) in [
        ("electron", eff.electron),
        ("either photon", eff.union),
        ("both photons", eff.both),
    ] {
        println!(
            "eta {name:14} {:6.2} % ± {:.2}{}",
            100.0 * e.eta,
            100.0 * e.stderr,
            if e.exceeds_one { "  (exceeds one)" } else { "" }
        );
    }
    for m in [1, 2] {
        let h = if m == 1 {
            an.electron_photon_car(1)?
        } else {
            an.two_photon_car(2)?
        };
        let c = h.car;
        println!(
            "CAR m = {m}: {:.1} ± {:.1} at {:.1} sigma",
            c.car, c.stderr, c.significance
        );
    }
    let g = an.coupling()?;
    println!("coupling from coincidences: {:.3} ± {:.3}", g.g0, g.stderr);
    Ok(())
}
