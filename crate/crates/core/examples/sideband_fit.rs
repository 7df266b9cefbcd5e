//! Fit the energy-loss spectrum of a simulated run and recover the coupling.
//!
//! cargo run --release --example sideband_fit

use fockherald::analysis::Analysis;
use fockherald::config::RunConfig;
use fockherald::model::{sideband_populations, spectrum_model, CouplingSpec};
use fockherald::simgen::generate;

fn main() -> fockherald::error::Result<()> {
    let mut cfg = RunConfig::paper();
    cfg.experiment.duration = 0.2;

    for coupling in [CouplingSpec::fixed(0.32), CouplingSpec::new(0.32, 0.24)?] {
        cfg.experiment.physics.coupling = coupling;
        let sim = generate(&cfg.experiment)?;
        let an = Analysis::new(&sim.events, &cfg, 0)?;
        let fit = an.fit_spectrum()?;
        println!(
            "generated g0 = {:.3} ± {:.3}  fitted g0 = {:.4} ± {:.4}  (zlp {:.3} eV, reduced chi2 {:.2})",
            coupling.mean_g0,
            coupling.std_g0,
            fit.params.coupling.mean_g0,
            fit.params.coupling.std_g0,
            fit.params.zlp_sigma,
            fit.reduced_chi2,
        );
        for (m, p) in fit.populations.p.iter().take(4).enumerate() {
            println!("  P_{m} = {p:.5}");
        }
    }

    // The model itself: a Poisson ladder of Gaussian loss peaks.
    let grid: Vec<f64> = (0..121).map(|i| -0.6 + i as f64 * 0.03).collect();
    let curve = spectrum_model(&cfg.experiment.physics, &grid)?;
    let peak = curve.iter().cloned().fold(0.0, f64::max);
    for (x, y) in grid.iter().zip(&curve).step_by(6) {
        println!(
            "{x:6.2} eV {}",
            "#".repeat((60.0 * (y / peak).sqrt()) as usize)
        );
    }
    let p = sideband_populations(0.32, 3)?;
    println!("fixed g0 = 0.32 populations {:?}", p.p);
    Ok(())
}
