//! Binary event and pixel files: write, read back, and reject damaged input.
//!
//! cargo run --release --example event_file_roundtrip

use fockherald::config::RunConfig;
use fockherald::ingest::{
    encode_events, parse_events, read_events_file, read_pixels_file, write_events_file,
    write_pixels_file,
};
use fockherald::simgen::generate;

fn main() -> fockherald::error::Result<()> {
    let mut cfg = RunConfig::paper();
    cfg.experiment.duration = 0.01;
    cfg.experiment.emit_pixels = true;
    let sim = generate(&cfg.experiment)?;
    let dir = std::env::temp_dir().join(format!("fockherald-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    let events = dir.join("events.evt");
    write_events_file(&events, &sim.events)?;
    assert_eq!(read_events_file(&events)?, sim.events);
    let hits = &sim.pixels.as_ref().expect("pixels requested").hits;
    let pixels = dir.join("pixels.pix");
    write_pixels_file(&pixels, hits)?;
    assert_eq!(&read_pixels_file(&pixels)?, hits);
    println!(
        "{} events ({} bytes) and {} pixel hits ({} bytes) round-tripped",
        sim.events.len(),
        std::fs::metadata(&events)?.len(),
        hits.len(),
        std::fs::metadata(&pixels)?.len()
    );

    let bytes = encode_events(&sim.events);
    match parse_events(&bytes[..bytes.len() - 5]) {
        Err(e) => println!("truncated file rejected: {e}"),
        Ok(_) => unreachable!("a partial record must not parse"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
