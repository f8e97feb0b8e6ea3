use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use optomech::cli::{
    diag_report, feasibility_report, run_sweep, run_time_trace, trace_spec_from_config, write_csv, write_trace_csv,
    Config, SweepSpec, TraceCooling, DEFAULT_THRESHOLD, DEFAULT_TRUNCATION,
};
use optomech::{Approximation, Error};

#[derive(Parser)]
#[command(name = "optomech", version, about = "Photon blockade near the optomechanical parametric instability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Per-mode Fock dimension.
    #[arg(long, global = true)]
    truncation: Option<usize>,
    /// Use first-order normal-mode quantities.
    #[arg(long, global = true)]
    first_order: bool,
    /// Add per-point wall time to sweep CSV.
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parameter sweep to CSV.
    Sweep { config: PathBuf },
    /// Time trace from vacuum with cooling on and/or off.
    Trace { config: PathBuf },
    /// Figure of merit and the inequality chain.
    Feasibility { config: PathBuf },
    /// Normal-mode report.
    Diag { config: PathBuf },
}

fn sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(path: &Path) -> Result<Config, Error> {
    Config::load(path)
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Sweep { config } => {
            let c = load(config)?;
            let mut spec = SweepSpec::from_config(&c)?;
            if let Some(t) = cli.truncation {
                spec.truncation = t;
            }
            if cli.first_order {
                spec.approximation = Approximation::FirstOrder;
            }
            spec.validate()?;
            let records = run_sweep(&spec, cli.workers)?;
            write_csv(&records, &spec.outputs, cli.timings, sink(&cli.out)?)?;
        }
        Command::Trace { config } => {
            let c = load(config)?;
            let t = c
                .trace
                .as_ref()
                .ok_or_else(|| Error::Config("missing [trace] table".into()))?;
            let mut params = c.params.to_params()?;
            t.rules.apply(&mut params);
            let spec = trace_spec_from_config(t)?;
            let dim = cli.truncation.or(t.truncation).unwrap_or(DEFAULT_TRUNCATION);
            let approx = if cli.first_order || t.first_order {
                Approximation::FirstOrder
            } else {
                Approximation::Exact
            };
            let settings: &[bool] = match t.cooling {
                TraceCooling::On => &[true],
                TraceCooling::Off => &[false],
                TraceCooling::Both => &[false, true],
            };
            let mut outs = Vec::new();
            for &cooling in settings {
                match run_time_trace(&params, &spec, cooling, dim, approx) {
                    Ok(o) => outs.push(o),
                    Err(e) => eprintln!("trace (cooling {cooling}) failed: {e}"),
                }
            }
            write_trace_csv(&outs, sink(&cli.out)?)?;
        }
        Command::Feasibility { config } => {
            let c = load(config)?;
            let p = c.params.to_params()?;
            let threshold = c.threshold.unwrap_or(DEFAULT_THRESHOLD);
            writeln!(sink(&cli.out)?, "{}", feasibility_report(&p, threshold))?;
        }
        Command::Diag { config } => {
            let c = load(config)?;
            let p = c.params.to_params()?;
            writeln!(sink(&cli.out)?, "{}", diag_report(&p)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
