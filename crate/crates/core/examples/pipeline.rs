//! The simulate, analyze and report commands called as library functions.
//!
//! cargo run --release --example pipeline [out_dir]

use std::path::PathBuf;

use fockherald::cli::{cmd_analyze, cmd_report, cmd_simulate, CliError};
use fockherald::config::RunConfig;

fn main() -> Result<(), CliError> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fockherald-pipeline"));
    let mut cfg = RunConfig::paper();
    cfg.experiment.duration = 0.2;

    let sim = cmd_simulate(&cfg, &root.join("sim"))?;
    println!("simulate: config {}", &sim.config_hash[..12]);
    let an = cmd_analyze(
        &root.join("sim/events.evt"),
        &cfg,
        &[],
        &root.join("analysis"),
        0,
    )?;
    for r in &an.reports {
        let scalars: Vec<String> = r
            .scalars
            .iter()
            .take(3)
            .map(|(k, v)| format!("{k}={}", v.map_or("nan".into(), |v| format!("{v:.4}"))))
            .collect();
        println!("  {:28} {}", r.id, scalars.join(" "));
    }
    for f in &an.manifest.failures {
        println!("  failed {}: {}", f.spec, f.reason);
    }
    let rep = cmd_report(&[root.join("analysis")], &root.join("report"))?;
    println!(
        "report: {} files in {}",
        rep.outputs.len(),
        root.join("report").display()
    );
    Ok(())
}
