use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fibrate::error::FibrateError;
use fibrate::run::{exit_code, run, write_outputs, Command, Format, RunConfig};

/// Zero-energy critical points via fibering maps.
#[derive(Debug, Parser)]
#[command(name = "fibrate", version)]
struct Cli {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of json,csv.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load(cli: &Cli) -> Result<RunConfig, FibrateError> {
    let mut config = RunConfig::load(&cli.config)?;
    config.command = Some(cli.command);
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    if let Some(f) = &cli.format {
        config.formats = f.clone();
    }
    if let Some(s) = cli.seed {
        config.options.seed = s;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let config = match load(&cli) {
        Ok(c) => c,
        Err(FibrateError::Io(e)) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let base = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    let result = run(&config, &base);
    let code = exit_code(&result);
    match &result {
        Ok(bundle) => {
            let out = if config.output.is_absolute() { config.output.clone() } else { base.join(&config.output) };
            match write_outputs(bundle, &config.formats, &out) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            for r in bundle.reports.iter().filter(|r| !r.passed) {
                eprintln!("check failed: {} (worst error {:e}, tolerance {:e})", r.name, r.worst_error, r.tolerance);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(code as u8)
}
