use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fockherald::cli::{cmd_analyze, cmd_report, cmd_simulate, load_config, CliError};

#[derive(Parser)]
#[command(
    name = "fockherald",
    version,
    about = "Electron-heralded photon statistics: simulate, analyze, report"
)]
struct Args {
    /// Config file; keys override the shipped paper preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate event, pixel and ground-truth files.
    Simulate,
    /// Run estimators on an event file.
    Analyze {
        events: PathBuf,
        /// Estimator spec such as `g2_discrete: m=1`; repeatable. Default: all.
        #[arg(long = "estimator", short = 'e')]
        estimators: Vec<String>,
    },
    /// Merge reports into per-figure CSV files.
    Report { reports: Vec<PathBuf> },
}

fn run(args: Args) -> Result<i32, CliError> {
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .map_err(CliError::config)?;
    }
    match args.command {
        Command::Simulate => {
            let cfg = load_config(args.config.as_deref(), args.seed)?;
            cmd_simulate(&cfg, &args.out)?;
            Ok(0)
        }
        Command::Analyze { events, estimators } => {
            // An event file written by `simulate` sits next to its config.
            let sibling = events
                .parent()
                .map(|d| d.join("config.cfg"))
                .filter(|p| p.exists());
            let cfg = load_config(args.config.as_deref().or(sibling.as_deref()), args.seed)?;
            let outcome = cmd_analyze(&events, &cfg, &estimators, &args.out, args.threads)?;
            for f in &outcome.manifest.failures {
                eprintln!(
                    "error code=4 kind=estimator reason={}: {}",
                    f.spec, f.reason
                );
            }
            Ok(outcome.exit_code())
        }
        Command::Report { reports } => {
            cmd_report(&reports, &args.out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FOCKHERALD_LOG", "warn"))
        .init();
    match run(Args::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code as u8)
        }
    }
}
