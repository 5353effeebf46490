use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use roaforge::app::{self, Command, RunLog};

/// Controller synthesis co-optimizing LQR cost and certified region of
/// attraction.
#[derive(Debug, Parser)]
#[command(name = "roaforge", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut log = RunLog::default();
    let outcome =
        app::load(&cli.config, cli.seed, cli.out, &mut log).and_then(|config| app::run(cli.command, &config, log));
    match outcome {
        Ok(dir) => {
            eprintln!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
