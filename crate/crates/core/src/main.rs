use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use emfris::check::run_gradcheck;
use emfris::harness::{
    aggregate, emit_convergence, run_convergence, run_elements, run_sweep, write_csv,
    ExperimentConfig,
};

/// Uplink exposure-index experiments for RIS-assisted cells.
#[derive(Parser)]
#[command(name = "emfris", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strategy comparison over the noise grid (exposure index and rate
    /// satisfaction per drop, plus per-cell means).
    Sweep {
        /// TOML config; omitted fields use the reference scenario defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for records.csv and aggregate.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Exposure index of optimized phases over the (N, M) grid.
    Elements {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Per-iteration exposure-index trace of one optimized run.
    Converge {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Noise power in dBm.
        #[arg(long, default_value_t = -94.5)]
        sigma2_dbm: f64,
        /// Drop index selecting the channel realization.
        #[arg(long, default_value_t = 0)]
        drop: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Finite-difference check of the analytic gradient and Hessian;
    /// nonzero exit on any violated tolerance.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>, drops: Option<usize>) -> anyhow::Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::from_toml_file(p).context("loading config")?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(drops) = drops {
        config.drops = drops;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sweep { config, out, seed, drops } => {
            let config = load_config(&config, seed, drops)?;
            eprintln!(
                "sweep: K={} N={} M={} drops={} strategies={:?}",
                config.k,
                config.n,
                config.m,
                config.drops,
                config.strategies.iter().map(|s| s.to_string()).collect::<Vec<_>>()
            );
            let records = run_sweep(&config)?;
            write_csv(&records, &out.join("records.csv"))?;
            write_csv(&aggregate(&records), &out.join("aggregate.csv"))?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Elements { config, out, seed, drops } => {
            let config = load_config(&config, seed, drops)?;
            let records = run_elements(&config)?;
            write_csv(&records, &out.join("elements.csv"))?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Converge { config, out, sigma2_dbm, drop, seed } => {
            let config = load_config(&config, seed, None)?;
            let state = run_convergence(&config, sigma2_dbm, drop)?;
            let path = out.join("convergence.csv");
            emit_convergence(&state.trace, &path)?;
            println!(
                "converged in {} iterations, EI {:.4e} W/kg; trace at {}",
                state.iterations,
                state.ei,
                path.display()
            );
        }
        Command::Gradcheck { instances, seed } => {
            let report = run_gradcheck(instances, seed, true)?;
            println!(
                "worst gradient rel err {:.3e} (tol 1e-6), worst hessian rel err {:.3e} (tol 1e-4), worst asymmetry {:.3e} (tol 1e-9)",
                report.grad_max_rel_err, report.hessian_max_rel_err, report.hessian_asymmetry
            );
            let pass = report.grad_max_rel_err < 1e-6
                && report.hessian_max_rel_err < 1e-4
                && report.hessian_asymmetry < 1e-9;
            if !pass {
                eprintln!("gradcheck FAILED");
                return Ok(ExitCode::FAILURE);
            }
            println!("gradcheck passed");
        }
    }
    Ok(ExitCode::SUCCESS)
}
