use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spheredec::harness::{compare, format_traces, read_csv, run_campaign, summary, write_csv, Settings};
use spheredec::Error;

/// Sphere decoding campaigns for MIMO detection.
#[derive(Debug, Parser)]
#[command(name = "spheredec", version, about, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign and write its metrics as CSV.
    Simulate(SimulateArgs),
    /// Compare two metric files over the same SNR grid.
    Compare {
        a: PathBuf,
        b: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Transmit antennas.
    #[arg(long)]
    tx: Option<String>,
    /// Receive antennas (defaults to --tx).
    #[arg(long)]
    rx: Option<String>,
    /// bpsk, qpsk, qam16 or qam64.
    #[arg(long = "mod", value_name = "MOD")]
    modulation: Option<String>,
    /// SNR grid in dB: `start:stop:step`, a comma list or one value.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    /// Trials per SNR point (default 1000).
    #[arg(long)]
    trials: Option<String>,
    /// Comma-separated decoders, e.g. `mmse,sd:bestfs:1,psd:8:dynamic`.
    #[arg(long)]
    decoder: Option<String>,
    /// Initial squared radius: formula, inf or a value.
    #[arg(long, allow_hyphen_values = true)]
    radius: Option<String>,
    /// Thread cap.
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output CSV path.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Record, audit and dump the first trial's search at each SNR point.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// errors or mmse-fallback.
    #[arg(long)]
    erasure: Option<String>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn settings(args: &SimulateArgs) -> Result<Settings, Error> {
    let base = match &args.config {
        Some(path) => Settings::parse(&std::fs::read_to_string(path).map_err(|e| io_error(path, e))?)?,
        None => Settings::default(),
    };
    let mut flags = Settings::default();
    let pairs = [
        ("tx", &args.tx),
        ("rx", &args.rx),
        ("mod", &args.modulation),
        ("snr", &args.snr),
        ("trials", &args.trials),
        ("decoder", &args.decoder),
        ("radius", &args.radius),
        ("threads", &args.threads),
        ("seed", &args.seed),
        ("erasure", &args.erasure),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            flags.set(key, v)?;
        }
    }
    flags.out = args.out.clone();
    flags.trace = args.trace.clone();
    Ok(base.overlay(flags))
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let settings = settings(args)?;
    let config = settings.to_config()?;
    let out = settings.out.clone().ok_or(Error::Config {
        line: None,
        field: "out".into(),
        message: "an output file is required".into(),
    })?;
    let result = run_campaign(&config)?;
    write_csv(&out, &result.table())?;
    if let Some(path) = &settings.trace {
        std::fs::write(path, format_traces(&result.traces)).map_err(|e| io_error(path, e))?;
    }
    print!("{}", summary(&result));
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Compare { a, b } => {
            let comparison = compare(&read_csv(&a)?, &read_csv(&b)?)?;
            print!("{comparison}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => EXIT_IO,
                Error::Config { .. } | Error::InvalidParameter(_) => EXIT_CONFIG,
                _ => 1,
            })
        }
    }
}
