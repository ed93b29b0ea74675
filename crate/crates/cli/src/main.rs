use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use podrom_cli::commands::Session;
use podrom_cli::config::{self, FlatConfig};

#[derive(Parser)]
#[command(name = "podrom", version, about = "POD reduced-order models for reaction-diffusion problems")]
struct Cli {
    /// TOML config; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Full-order checkpoint from `fom-run` to reuse.
    #[arg(long, global = true)]
    fom: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid.M=64`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the full-order model and write a checkpoint.
    FomRun {
        /// Also write the mass and stiffness matrices as triplets.
        #[arg(long)]
        dump: bool,
    },
    /// Build the snapshot grid (and optionally the snapshot matrix).
    Snapshots {
        #[arg(long)]
        dump: bool,
    },
    /// Compute the POD spectrum.
    Pod,
    /// Integrate the reduced model and write its trajectory.
    RomRun,
    /// Error series of the reduced model against the full-order run.
    Errors,
    /// Tail identity and constant-level bound audits.
    AuditBounds {
        /// Number of randomized tail-identity configurations.
        #[arg(long, default_value_t = 20)]
        random: usize,
    },
    /// Full pipeline, writing every CSV.
    Experiment,
    /// Repeat the experiment over values of one key.
    Sweep {
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut flat = match &cli.config {
        Some(p) => config::load(p)?,
        None => FlatConfig::parse("")?,
    };
    for o in &cli.overrides {
        let Some((k, v)) = o.split_once('=') else { bail!("override '{o}' is not KEY=VALUE") };
        flat.set(k.trim(), v.trim())?;
    }
    let dump = matches!(cli.cmd, Cmd::FomRun { dump: true } | Cmd::Snapshots { dump: true });
    let session = Session::new(flat, cli.out, cli.seed, cli.fom, dump)?;
    match cli.cmd {
        Cmd::FomRun { .. } => {
            session.fom_run()?;
        }
        Cmd::Snapshots { .. } => session.snapshots()?,
        Cmd::Pod => session.pod()?,
        Cmd::RomRun => session.rom_run()?,
        Cmd::Errors => session.errors()?,
        Cmd::AuditBounds { random } => {
            let report = session.audit_bounds(random)?;
            if !report.all_pass() {
                bail!("some audits failed; see audit.csv");
            }
        }
        Cmd::Experiment => session.experiment()?,
        Cmd::Sweep { key, values } => {
            session.sweep(&key, &values)?;
        }
    }
    Ok(())
}
