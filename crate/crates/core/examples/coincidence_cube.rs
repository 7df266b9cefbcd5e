//! Match photons to electrons, build the delay-delay-energy cube and project it.
//!
//! cargo run --release --example coincidence_cube

use fockherald::config::RunConfig;
use fockherald::correlate::{
    correlate_sharded, project, Columns, CubeAxes, CubeAxis, ProjectionSpec, RecordFilter,
};
use fockherald::simgen::generate;

fn main() -> fockherald::error::Result<()> {
    let mut cfg = RunConfig::paper();
    cfg.experiment.duration = 0.3;
    let sim = generate(&cfg.experiment)?;
    let cols = Columns::from_stream(&sim.events);
    let axes = CubeAxes::from_config(&cfg.analysis)?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (records, cube) = correlate_sharded(
        cols.streams(),
        cfg.analysis.max_delay,
        axes,
        RecordFilter::TrueOnly,
        4 * threads,
        threads,
    )?;

    let linked = records
        .iter()
        .filter(|r| r.a.is_some() || r.b.is_some())
        .count();
    println!(
        "{} electrons, {linked} with a photon within ±100 ns, {} triples",
        records.len(),
        cube.triples
    );

    // Delay on detector A for the one-photon loss peak.
    let spec = ProjectionSpec {
        keep: vec![CubeAxis::TauA],
        energy: Some((0.45, 1.35)),
        ..Default::default()
    };
    let h = cube.pair_histogram(fockherald::simgen::Channel::A, spec.energy)?;
    let peak = *h.iter().max().unwrap_or(&1) as f64;
    for (i, &n) in h.iter().enumerate() {
        let tau = cube.axes.tau_a.center(i) / 1e3;
        if tau.abs() < 12.0 {
            println!(
                "{tau:7.2} ns {:6} {}",
                n,
                "#".repeat((50.0 * n as f64 / peak) as usize)
            );
        }
    }
    let triples = project(
        &cube,
        &ProjectionSpec {
            keep: vec![CubeAxis::TauDiff],
            ..spec
        },
    )?;
    println!("m = 1 triples in the cube: {}", triples.total());
    Ok(())
}
