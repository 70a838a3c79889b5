use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hopperlab::{load_config, resolve_out_dir, run_command, CliError, Command, RunOptions};

/// Simulated monopod hops on granular terrain: force estimation and
/// stiffness identification.
#[derive(Debug, Parser)]
#[command(name = "hopperlab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (HOPPERLAB_OUT takes precedence).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds replacing the configured ones.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Skip trials a previous run already finished.
    #[arg(long)]
    resume: bool,
}

fn run(args: Args) -> Result<String, CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seeds) = args.seeds.clone() {
        cfg = cfg.with_seeds(seeds)?;
    }
    if args.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let opts = RunOptions {
        out: resolve_out_dir(args.out.as_deref(), &cfg),
        jobs: args.jobs,
        resume: args.resume,
        seeds: args.seeds,
    };
    run_command(&cfg, args.command, &opts)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hopperlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
