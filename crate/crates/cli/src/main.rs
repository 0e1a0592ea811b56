use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pottslab_cli::commands::{execute, rerun, CliError, Experiment};
use pottslab_cli::config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pottslab", version, about = "Potts and random-cluster experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, applied after the file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler and record per-sweep observables.
    Sample(Common),
    /// Order parameter and percolation at the centre site.
    EstimateTheta(Common),
    /// Wired percolation fraction used for droplet volumes.
    EstimateThetaStar(Common),
    /// Empirical phase partitions along a chain.
    PhasePartition(Common),
    /// Surface energy of a stored or reference partition.
    SurfaceEnergy(Common),
    /// Cut-event surface tension estimates for every axis.
    TauProbe(Common),
    /// Minimal two-point connectivity in a slab.
    SlabProbe(Common),
    /// Rasterized Wulff crystal of the configured tension.
    Wulff(Common),
    /// Simulated annealing of the surface energy.
    Anneal(Common),
    /// Droplet ensemble under a colour-fraction condition.
    Droplet(Common),
    /// Exact enumeration checks on a tiny lattice.
    OracleCheck(Common),
    /// Replay a manifest and compare every artifact digest.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("reading {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for (k, item) in common.set.iter().enumerate() {
        let (key, value) =
            item.split_once('=').ok_or_else(|| ConfigError::Syntax { line: k + 1, text: item.clone() })?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (experiment, common) = match cli.command {
        Command::Rerun { manifest, out } => {
            let (report, outcome) = rerun(&manifest, out.as_deref())?;
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("output: {}", report.out_dir.display());
            println!("checked: {}", report.checked);
            if report.mismatches.is_empty() {
                println!("rerun: identical");
                return Ok(());
            }
            return Err(CliError::Runtime(format!("rerun differs: {}", report.mismatches.join(", "))));
        }
        Command::Sample(c) => (Experiment::Sample, c),
        Command::EstimateTheta(c) => (Experiment::EstimateTheta, c),
        Command::EstimateThetaStar(c) => (Experiment::EstimateThetaStar, c),
        Command::PhasePartition(c) => (Experiment::PhasePartition, c),
        Command::SurfaceEnergy(c) => (Experiment::SurfaceEnergy, c),
        Command::TauProbe(c) => (Experiment::TauProbe, c),
        Command::SlabProbe(c) => (Experiment::SlabProbe, c),
        Command::Wulff(c) => (Experiment::Wulff, c),
        Command::Anneal(c) => (Experiment::Anneal, c),
        Command::Droplet(c) => (Experiment::Droplet, c),
        Command::OracleCheck(c) => (Experiment::OracleCheck, c),
    };
    let cfg = load_config(&common)?;
    let outcome = execute(experiment, &cfg)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!("output: {}", cfg.output_dir);
    match outcome.failure {
        Some(msg) => Err(CliError::Runtime(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
