use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rand::rngs::StdRng;
use rand::SeedableRng;

use tokengate::client::Wallet;
use tokengate::gas::{GasSchedule, SNAPSHOT_USD_PER_GAS};
use tokengate::harness::{reconstruct_balances, run, RunConfig, Scenario};
use tokengate::ledger::BlockLog;

/// Token-gated IoT access-control simulator.
#[derive(Debug, Parser)]
#[command(name = "tokengate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and print its report.
    Run {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Currency per gas unit for the cost column.
        #[arg(long, default_value_t = SNAPSHOT_USD_PER_GAS)]
        gas_price: f64,
        /// Write the binary block log here, and a JSONL copy next to it.
        #[arg(long)]
        export_blocks: Option<PathBuf>,
        /// TOML file overriding gas costs.
        #[arg(long)]
        gas_schedule: Option<PathBuf>,
    },
    /// Reconstruct balances at a height from a block log.
    Audit {
        blocklog: PathBuf,
        #[arg(long)]
        height: u64,
    },
    /// Create or inspect wallet key files.
    Wallet {
        #[command(subcommand)]
        action: WalletAction,
    },
}

#[derive(Debug, Subcommand)]
enum WalletAction {
    /// Generate a key pair. Keys are stored unencrypted.
    New {
        /// Key file to write; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Derive the key from a seed instead of system randomness.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the address and public key of a key file.
    Show { file: PathBuf },
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Assertions,
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertions) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            file,
            seed,
            gas_price,
            export_blocks,
            gas_schedule,
        } => run_scenario(
            &file,
            seed,
            gas_price,
            export_blocks.as_deref(),
            gas_schedule.as_deref(),
        ),
        Command::Audit { blocklog, height } => Ok(audit(&blocklog, height)?),
        Command::Wallet { action } => Ok(wallet(action)?),
    }
}

fn run_scenario(
    file: &Path,
    seed: u64,
    usd_per_gas: f64,
    export: Option<&Path>,
    schedule: Option<&Path>,
) -> Result<(), Failure> {
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let scenario = Scenario::parse(&text).with_context(|| format!("parsing {}", file.display()))?;
    let gas_schedule = match schedule {
        Some(p) => GasSchedule::from_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => GasSchedule::default(),
    };
    let config = RunConfig {
        seed,
        gas_schedule,
        usd_per_gas,
        ..RunConfig::default()
    };
    let report = run(&scenario, &config).with_context(|| format!("running {}", file.display()))?;

    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "scenario {}", file.display()).map_err(anyhow::Error::from)?;
    out.write_all(report.render().as_bytes())
        .map_err(anyhow::Error::from)?;

    if let Some(path) = export {
        let log = report
            .block_log
            .as_ref()
            .context("scenario never initialized a contract; no blocks to export")?;
        log.save(path)
            .with_context(|| format!("writing {}", path.display()))?;
        let jsonl = jsonl_path(path);
        log.write_jsonl(BufWriter::new(
            File::create(&jsonl).map_err(anyhow::Error::from)?,
        ))
        .with_context(|| format!("writing {}", jsonl.display()))?;
        eprintln!("wrote {} and {}", path.display(), jsonl.display());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Assertions)
    }
}

fn jsonl_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".jsonl");
    PathBuf::from(s)
}

fn audit(path: &Path, height: u64) -> Result<()> {
    let log = BlockLog::load(path).with_context(|| format!("loading {}", path.display()))?;
    let snapshot = reconstruct_balances(&log, height)?;
    print!("{snapshot}");
    Ok(())
}

fn wallet(action: WalletAction) -> Result<()> {
    match action {
        WalletAction::New { out, seed } => {
            let w = match seed {
                Some(s) => Wallet::generate(&mut StdRng::seed_from_u64(s)),
                None => Wallet::generate(&mut rand::rng()),
            };
            match out {
                Some(path) => {
                    w.save(&path)
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!("address {}", w.address());
                    println!("public {}", w.public_key());
                }
                None => print!("{}", w.to_key_file()),
            }
        }
        WalletAction::Show { file } => {
            let w = Wallet::load(&file).with_context(|| format!("reading {}", file.display()))?;
            println!("address {}", w.address());
            println!("public {}", w.public_key());
        }
    }
    Ok(())
}
