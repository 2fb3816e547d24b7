//! `hetsim` — run, validate and analyze simulation scenarios.
//!
//! Exit codes: 0 on success, 1 for invalid inputs (scenario or log), 2
//! for runtime faults.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hetsim_core::engine;
use hetsim_core::error::Error;
use hetsim_core::qos::context::ContextSnapshot;
use hetsim_core::qos::oracle;
use hetsim_core::scenario::load_scenario;
use hetsim_core::stats;

#[derive(Parser)]
#[command(
    name = "hetsim",
    version,
    about = "Deterministic simulator for self-reconfiguring component applications"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and stream the event log (JSON Lines).
    Run {
        scenario: PathBuf,
        /// Number of ticks to simulate.
        #[arg(long, default_value_t = 200)]
        ticks: u64,
        /// Override the scenario's digest seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the log here instead of stdout.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Parse and validate a scenario, reporting what it declares.
    Validate { scenario: PathBuf },
    /// Replay to a tick and print the exhaustive configuration ranking
    /// for every application at that context.
    Oracle {
        scenario: PathBuf,
        /// Snapshot after this many ticks (0 = the initial context).
        #[arg(long, default_value_t = 0)]
        tick: u64,
        /// Override the scenario's digest seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a run log: energy, latency, losses, timeline.
    Stats { log: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse { .. }
        | Error::DanglingReference { .. }
        | Error::InvalidValue(_)
        | Error::MalformedLog { .. } => 1,
        _ => 2,
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run {
            scenario,
            ticks,
            seed,
            log,
        } => {
            let spec = load_scenario(&scenario)?;
            match log {
                Some(path) => {
                    let file = BufWriter::new(File::create(&path)?);
                    let (_, _, summary) = engine::run(&spec, ticks, seed, file)?;
                    print!("{}", summary.render());
                }
                None => {
                    let stdout = io::stdout().lock();
                    let (_, _, summary) = engine::run(&spec, ticks, seed, stdout)?;
                    // Keep stdout a clean JSONL stream.
                    eprint!("{}", summary.render());
                }
            }
            Ok(())
        }
        Command::Validate { scenario } => {
            let spec = load_scenario(&scenario)?;
            println!("ok: {}", scenario.display());
            println!("  hosts: {}", spec.hosts.len());
            println!("  links: {}", spec.links.len());
            println!("  descriptors: {}", spec.repository.len());
            for family in &spec.applications {
                println!(
                    "  application {}: {} configurations, supervisor {}",
                    family.app,
                    family.configurations.len(),
                    family.supervisor
                );
            }
            println!("  events: {}", spec.events.len());
            Ok(())
        }
        Command::Oracle {
            scenario,
            tick,
            seed,
        } => {
            let spec = load_scenario(&scenario)?;
            let sim = engine::replay_to(&spec, tick, seed)?;
            let mut out = io::stdout().lock();
            for family in &spec.applications {
                let ctx = ContextSnapshot::capture(&sim.world, &family.app);
                writeln!(out, "application {} at tick {tick}:", family.app)?;
                write!(out, "{}", oracle::render(&oracle::rank(family, &ctx)))?;
            }
            Ok(())
        }
        Command::Stats { log } => {
            let text = std::fs::read_to_string(&log)?;
            let report = stats::stats_from_text(&text)?;
            print!("{}", stats::render(&report));
            Ok(())
        }
    }
}
