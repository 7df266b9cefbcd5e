//! From raw camera hits to calibrated electron energies.
//!
//! cargo run --release --example pixel_clustering

use fockherald::config::RunConfig;
use fockherald::ingest::{calibrate_energy, cluster_pixel_hits, correct_zlp_drift, CalibrationMap};
use fockherald::simgen::generate;

fn main() -> fockherald::error::Result<()> {
    let mut cfg = RunConfig::paper();
    cfg.experiment.electron_rate = 2e4;
    cfg.experiment.duration = 20.0;
    cfg.experiment.emit_pixels = true;
    cfg.experiment.zlp_drift_rate = 0.01;
    let sim = generate(&cfg.experiment)?;
    let hits = sim.pixels.expect("pixels requested").hits;

    let clusters = cluster_pixel_hits(&hits, cfg.analysis.cluster_window)?;
    let mean_size = clusters.iter().map(|c| c.size as f64).sum::<f64>() / clusters.len() as f64;
    println!(
        "{} hits -> {} clusters, {mean_size:.2} pixels each",
        hits.len(),
        clusters.len()
    );

    let e = &cfg.experiment.electron;
    let cal = CalibrationMap {
        dispersion: e.pixel_dispersion,
        zlp_reference: e.zlp_column,
        drift_window: 5.0,
    };
    let calibrated = calibrate_energy(&clusters, &cal)?;
    let (fixed, report) = correct_zlp_drift(
        &calibrated,
        cal.drift_window,
        cfg.experiment.physics.photon_energy,
    )?;
    for w in &report.windows {
        println!(
            "  window at {:5.1} s: {:6} electrons, zlp offset {:+.3} eV",
            w.start as f64 * 1e-12,
            w.electrons,
            w.offset
        );
    }
    let near_zero = fixed.electrons().filter(|ev| ev.energy.abs() < 0.3).count();
    println!(
        "{near_zero} of {} electrons within 0.3 eV of the zero-loss peak after correction",
        fixed.electrons().count()
    );
    Ok(())
}
