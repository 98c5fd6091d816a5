use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use thermolab::lab::{run_experiment, write_report, ExperimentConfig, Format, Subcommand};
use thermolab::report::to_json;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Validate,
    Flow,
    Jacobi,
    Riccati,
    Pestov,
    Identity,
    Xray,
    Invert,
    Anosov,
    Cohomology,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

/// Numerical experiments on thermostat flows.
#[derive(Debug, Parser)]
#[command(name = "lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (JSON, schema 1).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
}

fn subcommand(c: Command) -> Subcommand {
    match c {
        Command::Validate => Subcommand::Validate,
        Command::Flow => Subcommand::Flow,
        Command::Jacobi => Subcommand::Jacobi,
        Command::Riccati => Subcommand::Riccati,
        Command::Pestov => Subcommand::Pestov,
        Command::Identity => Subcommand::Identity,
        Command::Xray => Subcommand::Xray,
        Command::Invert => Subcommand::Invert,
        Command::Anosov => Subcommand::Anosov,
        Command::Cohomology => Subcommand::Cohomology,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("LAB_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let format = match cli.format {
        OutputFormat::Json => Format::Json,
        OutputFormat::Csv => Format::Csv,
    };
    let result = ExperimentConfig::load(&cli.config).and_then(|cfg| {
        let bundle = run_experiment(&cfg, subcommand(cli.command))?;
        for w in &bundle.warnings {
            eprintln!("warning: {w}");
        }
        match &cli.out {
            Some(dir) => {
                for path in write_report(&bundle, format, dir)? {
                    eprintln!("wrote {}", path.display());
                }
            }
            None => print!("{}", to_json(&bundle)?),
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
