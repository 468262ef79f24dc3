use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use dprmdi_cli::commands;
use dprmdi_cli::config::{parse_phases, ExperimentConfig};
use dprmdi_cli::output::{emit, load_stats};
use dprmdi_core::fock::PhaseRandomization;

#[derive(Parser)]
#[command(
    name = "dprmdi",
    version,
    about = "Decoy-state MDI-QKD key rates with discrete phase randomization"
)]
struct Cli {
    /// INI experiment configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when neither this nor `[output] path` is set).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for sweeps; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimized key rate against distance for every configured phase count.
    KeyrateSweep {
        /// Comma-separated phase counts, e.g. `9,14,inf`.
        #[arg(long)]
        phases: Option<String>,
    },
    /// Key rate against an injected single-photon error rate.
    NoiseSweep {
        #[arg(long)]
        phases: Option<String>,
    },
    /// Unambiguous-state-discrimination attack on a source without phase randomization.
    AttackDemo {
        #[arg(long, default_value_t = 0.1)]
        mu: f64,
        #[arg(long, default_value_t = 0.02)]
        nu: f64,
        /// Channel transmittance; defaults to q_opt * mu / 2.
        #[arg(long)]
        eta: Option<f64>,
        /// Largest photon number Eve forwards explicitly.
        #[arg(long, default_value_t = 10)]
        cutoff: usize,
        /// Also write the one-row CSV record here.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Yield and error bounds from a measured statistics CSV.
    Estimate {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        phases: Option<PhaseRandomization>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
    },
    /// Simulated statistics CSV at the configured distance and intensities.
    Simulate {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out = cli.output.or_else(|| cfg.output.clone());
    let out = out.as_deref();

    match cli.command {
        Command::KeyrateSweep { phases } => {
            if let Some(list) = phases {
                cfg.phases = parse_phases(&list)?;
            }
            let rows = commands::keyrate_rows(&cfg)?;
            emit(out, &commands::keyrate_csv(&rows)?)?;
        }
        Command::NoiseSweep { phases } => {
            if let Some(list) = phases {
                cfg.phases = parse_phases(&list)?;
            }
            let rows = commands::noise_rows(&cfg)?;
            emit(out, &commands::noise_csv(&rows)?)?;
        }
        Command::AttackDemo {
            mu,
            nu,
            eta,
            cutoff,
            record,
        } => {
            let res = commands::attack(mu, nu, eta, cutoff)?;
            emit(out, &res.text)?;
            if let Some(p) = record {
                emit(Some(&p), &res.record)?;
            }
            if res.report.solution.is_none() {
                eprintln!(
                    "error: {}",
                    res.report.infeasibility.as_deref().unwrap_or("no forwarding policy")
                );
                return Ok(ExitCode::from(2));
            }
        }
        Command::Estimate { stats, phases, mu, nu } => {
            commands::intensities_override(&mut cfg, mu, nu)?;
            let stats = load_stats(&stats)?;
            let bounds = commands::estimate_bounds(&cfg, &stats, phases)?;
            emit(out, &commands::bounds_csv(&bounds)?)?;
        }
        Command::Simulate { mu, nu } => {
            commands::intensities_override(&mut cfg, mu, nu)?;
            emit(out, &commands::simulate_csv(&cfg)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
