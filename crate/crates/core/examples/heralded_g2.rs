//! Heralded second-order correlation: antibunching on the one-photon loss peak.
//!
//! cargo run --release --example heralded_g2

use fockherald::analysis::Analysis;
use fockherald::config::RunConfig;
use fockherald::simgen::generate;

fn main() -> fockherald::error::Result<()> {
    let cfg = RunConfig::paper();
    let sim = generate(&cfg.experiment)?;
    let an = Analysis::new(&sim.events, &cfg, 0)?;

    for m in [None, Some(1), Some(2)] {
        let d = an.discrete(m)?;
        let (rest, rest_err) = d.mean_over(1..21);
        let label = m.map_or("all electrons".to_string(), |m| format!("m = {m} window"));
        println!(
            "{label:14}: g2[0] = {:.3} ± {:.3}, g2[1..20] = {rest:.3} ± {rest_err:.3} ({} heralds)",
            d.g2[0], d.stderr[0], d.heralds
        );
    }

    let (ia, ib) = an.coincidence_cell(1);
    if let Some((g, e)) = an.heralded_surface(1)?.get(ia, ib) {
        println!("surface at the coincidence cell: {g:.3} ± {e:.3}");
    }
    let t = an.time_averaged(1)?;
    if let Some((g, e)) = t.at(0.0) {
        println!("time-averaged at zero relative delay: {g:.3} ± {e:.3}");
    }
    Ok(())
}
