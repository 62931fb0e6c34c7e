use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Run fractional p-Laplacian experiments from JSON configs")]
struct Cli {
    /// Output directory for summaries and CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed stored in each config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single config file.
    Run { config: PathBuf },
    /// Run every *.json config in a directory.
    Suite { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match cli.command {
        Command::Run { config } => match fraclab::run_file(&config, &cli.out, cli.seed) {
            Ok(summary) => {
                for c in &summary.checks {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                println!("{}: {}", summary.name, if summary.passed { "passed" } else { "failed" });
                if summary.passed {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Suite { dir } => match fraclab::run_suite(&dir, &cli.out, cli.seed) {
            Ok(report) => {
                for r in &report.runs {
                    let status = match r.passed {
                        Some(true) => "PASS",
                        Some(false) => "FAIL",
                        None => "ERROR",
                    };
                    println!("{status} {}", r.config);
                }
                println!(
                    "{} configs: {} passed, {} failed, {} errored",
                    report.total, report.passed, report.failed, report.errored
                );
                if report.all_passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
