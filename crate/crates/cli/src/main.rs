use std::path::PathBuf;
use std::process::ExitCode;

use ballfluct::cli::{render_text, run, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ballfluct", version, about = "Fluctuations of ball measures for Gibbs states of expanding skew products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory for reports, tables and the model cache.
        #[arg(long, env = "BALLFLUCT_OUT")]
        out: Option<PathBuf>,
        /// Worker threads (all cores when absent).
        #[arg(long, env = "BALLFLUCT_THREADS")]
        threads: Option<usize>,
        /// Build the Gibbs model even when a cached copy exists.
        #[arg(long)]
        no_cache: bool,
    },
}

fn main() -> ExitCode {
    let Command::Run { config, out, threads, no_cache } = Cli::parse().command;
    let outcome = run(&config, &RunOptions { out_dir: out, threads, no_cache });
    let text = render_text(&outcome.report);
    if let Some(e) = &outcome.report.error {
        eprintln!("error [{}]: {}", e.reason, e.message);
    } else {
        print!("{text}");
    }
    println!("report written to {}", outcome.out_dir.join("report.json").display());
    ExitCode::from(outcome.exit_code as u8)
}
