use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use beamwander::cli::{self, Command, RunConfig};
use beamwander::Error;
use clap::Parser;

/// Beam-wandering channel toolkit: writes the requested table as CSV.
#[derive(Debug, Parser)]
#[command(name = "beamwander", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Flat key = value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; the manifest goes next to it as <out>.manifest.
    /// Without it the CSV goes to stdout and the manifest to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(args: &Args) -> Result<i32, Error> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let output = cli::run(args.command, &cfg)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = cli::manifest(args.command, &cfg, Some(&args.config), created);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &output.csv)?;
            let mut manifest_path = path.clone().into_os_string();
            manifest_path.push(".manifest");
            std::fs::write(manifest_path, manifest)?;
        }
        None => {
            std::io::stdout().write_all(output.csv.as_bytes())?;
            std::io::stderr().write_all(manifest.as_bytes())?;
        }
    }
    Ok(if output.verification_failed {
        cli::EXIT_VERIFY_FAILED
    } else {
        cli::EXIT_OK
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { cli::EXIT_USAGE } else { cli::EXIT_OK };
            return ExitCode::from(code as u8);
        }
    };
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("beamwander: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
