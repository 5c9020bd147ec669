use clap::Parser;
use ipower::{parse_config, run, RunError, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Asymptotic power of DIM- and PIM-based tests of additivity.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    /// Scenario file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; overrides `out` in the config. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed for mc mode; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a matplotlib script that plots the CSV.
    #[arg(long)]
    plot_script: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = std::fs::read_to_string(&args.config)
        .map_err(|source| RunError::Io {
            context: format!("reading {}", args.config.display()),
            source,
        })
        .and_then(|text| parse_config(&text).map_err(RunError::from))
        .and_then(|config| {
            run(
                config,
                &RunOptions {
                    out: args.out,
                    threads: args.threads,
                    seed: args.seed,
                    plot_script: args.plot_script,
                },
            )
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ipower: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
