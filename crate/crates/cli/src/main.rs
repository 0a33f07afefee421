//! `felt`: batch front end for simulation, sieve estimation, tracing,
//! summaries, bootstrap and sieve-order sweeps.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numerical
//! failure. Failures also print one JSON line on stderr.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use felt_core::sieve_gmm::Weighting;
use felt_core::synth::DgpConfig;
use felt_core::FeltError;

use config::{BootstrapTarget, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "felt",
    version,
    about = "Fixed-effects linear transformation models",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Panel CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Bernstein sieve degree.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Seed for simulation or bootstrap resampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap replications.
    #[arg(long = "B")]
    b: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// GMM weighting: identity or two_step.
    #[arg(long)]
    weighting: Option<Weighting>,
    /// Mean resource share used to scale eta.
    #[arg(long)]
    target_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    DgpL1,
    DgpS,
    Tracing,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a panel and its latent record from a DGP.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Built-in design used when the config has no "dgp" block.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Number of households.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit the monotone sieve GMM and write g_hat.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Shift the plotted curves to half the geometric-mean budget.
        #[arg(long)]
        relocate: bool,
    },
    /// Composite conditional logit over threshold grids and traced transforms.
    Trace {
        #[command(flatten)]
        common: Common,
    },
    /// Fixed-effect summaries, share regression and projection slopes.
    Summarize {
        #[command(flatten)]
        common: Common,
    },
    /// Household bootstrap of summaries, curves or traced transforms.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        target: Option<BootstrapTarget>,
        /// Also write every replication to replications.csv.
        #[arg(long)]
        dump_replications: bool,
    },
    /// Fit K = 1..12 and tabulate the summaries by K.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<FeltError> for CliError {
    fn from(e: FeltError) -> Self {
        match e {
            FeltError::Config(_) => CliError::Usage(e.to_string()),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(d) = &common.data {
        cfg.data = Some(d.clone());
    }
    if let Some(k) = common.k {
        cfg.degree = k;
    }
    if let Some(b) = common.b {
        cfg.bootstrap.b = b;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(w) = common.weighting {
        cfg.weighting = w;
    }
    if let Some(m) = common.target_mean {
        cfg.target_mean = m;
    }
    if let Some(s) = common.seed {
        cfg.bootstrap.seed = s;
        if let Some(d) = cfg.dgp.as_mut() {
            d.seed = s;
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::Simulate { common, preset, n } => {
            let mut cfg = load_config(&common)?;
            if preset.is_some() || cfg.dgp.is_none() {
                let seed = common.seed.unwrap_or(0);
                let size = n.unwrap_or(5000);
                cfg.dgp = Some(match preset.unwrap_or(Preset::DgpS) {
                    Preset::DgpL1 => DgpConfig::dgp_l1(size, seed),
                    Preset::DgpS => DgpConfig::dgp_s(size, seed),
                    Preset::Tracing => DgpConfig::tracing(size, seed),
                });
            } else if let (Some(n), Some(d)) = (n, cfg.dgp.as_mut()) {
                d.n = n;
            }
            commands::simulate(&cfg)
        }
        Command::Estimate { common, relocate } => {
            let mut cfg = load_config(&common)?;
            cfg.relocate |= relocate;
            commands::estimate_cmd(&cfg)
        }
        Command::Trace { common } => commands::trace_cmd(&load_config(&common)?),
        Command::Summarize { common } => commands::summarize_cmd(&load_config(&common)?),
        Command::Bootstrap {
            common,
            target,
            dump_replications,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = target {
                cfg.bootstrap.target = t;
            }
            cfg.bootstrap.dump_replications |= dump_replications;
            commands::bootstrap_cmd(&cfg)
        }
        Command::Sweep { common } => commands::sweep_cmd(&load_config(&common)?),
    }
}

fn report(err: &CliError) {
    let line = serde_json::json!({
        "status": "error",
        "kind": err.kind(),
        "code": err.code(),
        "message": err.message(),
    });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            report(&CliError::Usage(e.kind().to_string()));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            report(&e);
            ExitCode::from(e.code())
        }
    }
}
