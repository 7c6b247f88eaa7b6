//! `rps` — numerical experiments around random periodic solutions of
//! time-periodic (functional) SDEs: hypothesis certificates, coupling runs,
//! pull-back convergence, periodicity tests, and moment probes.

// Validation guards use `!(x > 0.0)` so NaN is rejected with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod build;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rps", version, about = "Random periodic solutions of periodic SDEs: certificates, couplings, pull-back")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the contraction certificate for the configured model class.
    Certify {
        #[command(flatten)]
        common: ConfigArgs,
        /// Output file for the certificate (JSON).
        #[arg(long, default_value = "cert.json")]
        out: String,
    },
    /// Tabulate the coupling comparison function phi for (K1, K2, L).
    Phi {
        #[arg(long)]
        k1: f64,
        #[arg(long)]
        k2: f64,
        #[arg(long = "L", visible_alias = "l")]
        l: f64,
        #[arg(long, default_value = "phi.csv")]
        out: String,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Integrate one trajectory and dump it as CSV.
    Simulate {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long, default_value = "path.csv")]
        out: String,
    },
    /// Run a coupled pair (reflection for sde, synchronous for delay).
    Couple {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long, default_value = "coupled.csv")]
        out: String,
    },
    /// Pull-back sweep: endpoint gaps over successively earlier starts.
    Pullback {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long, default_value = "pullback.csv")]
        out: String,
    },
    /// Periodicity test of the pull-back limit.
    Periodicity {
        #[command(flatten)]
        common: ConfigArgs,
        /// dist (law at t vs t+shift) or path (bit-exact identity).
        #[arg(long)]
        mode: String,
        /// Shift to test against; defaults to the model period.
        #[arg(long)]
        shift: Option<f64>,
        #[arg(long, default_value = "periodicity.json")]
        out: String,
    },
    /// Mean-square moment probe along a horizon.
    Probe {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long, default_value = "probe.csv")]
        out: String,
    },
}

fn run() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Certify { common, out } => {
            let cfg = commands::load_config(&common.config, common.seed, common.out_dir.as_deref())?;
            commands::ensure_out_dir(&cfg)?;
            commands::cmd_certify(&cfg, &out)
        }
        Cmd::Phi { k1, k2, l, out, out_dir } => commands::cmd_phi(k1, k2, l, &out, out_dir.as_deref()),
        Cmd::Simulate { common, out } => {
            let cfg = commands::load_config(&common.config, common.seed, common.out_dir.as_deref())?;
            commands::ensure_out_dir(&cfg)?;
            commands::cmd_simulate(&cfg, &out)
        }
        Cmd::Couple { common, out } => {
            let cfg = commands::load_config(&common.config, common.seed, common.out_dir.as_deref())?;
            commands::ensure_out_dir(&cfg)?;
            commands::cmd_couple(&cfg, &out)
        }
        Cmd::Pullback { common, out } => {
            let cfg = commands::load_config(&common.config, common.seed, common.out_dir.as_deref())?;
            commands::ensure_out_dir(&cfg)?;
            commands::cmd_pullback(&cfg, &out)
        }
        Cmd::Periodicity { common, mode, shift, out } => {
            let cfg = commands::load_config(&common.config, common.seed, common.out_dir.as_deref())?;
            commands::ensure_out_dir(&cfg)?;
            commands::cmd_periodicity(&cfg, &mode, shift, &out)
        }
        Cmd::Probe { common, out } => {
            let cfg = commands::load_config(&common.config, common.seed, common.out_dir.as_deref())?;
            commands::ensure_out_dir(&cfg)?;
            commands::cmd_probe(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
