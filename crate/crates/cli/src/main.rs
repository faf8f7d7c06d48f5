use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use merge_mech_cli::commands::gate_failures;
use merge_mech_cli::{parse_config, run_audit, run_compare, run_ratio, to_csv, CliError};

#[derive(Parser)]
#[command(name = "merge-mech", version, about = "Evaluate, audit, and bound merging mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Write CSV here instead of the config's `output` (or stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Objective, revenue, and user experience per mechanism
    Compare(Common),
    /// Property audits; exits 4 on a hard-gate violation
    Audit(Common),
    /// Approximation guarantees on the configured instance
    Ratio(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, kind) = match &cli.command {
        Command::Compare(c) => (c, "compare"),
        Command::Audit(c) => (c, "audit"),
        Command::Ratio(c) => (c, "ratio"),
    };
    let mut cfg = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let output = common.output.clone().or_else(|| cfg.output.clone());
    let mut gate = None;
    let bytes = match kind {
        "compare" => to_csv(&run_compare(&cfg)?)?,
        "audit" => {
            let rows = run_audit(&cfg)?;
            let failed: Vec<String> =
                gate_failures(&rows).iter().map(|r| format!("{} {} ({})", r.mechanism, r.property, r.scope)).collect();
            if !failed.is_empty() {
                gate = Some(CliError::AuditGate(failed.join(", ")));
            }
            to_csv(&rows)?
        }
        _ => to_csv(&run_ratio(&cfg)?)?,
    };
    match output {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::Write::write_all(&mut std::io::stdout(), &bytes)?,
    }
    gate.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("merge-mech: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
