use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use hetsim_cli::commands::{self, cmd_drift_check, cmd_exact, cmd_simulate, cmd_sweep};
use hetsim_cli::config::ConfigFile;
use hetsim_core::sweep::MetricId;

#[derive(Parser)]
#[command(name = "hetsim", version, about = "Simulation and exact analysis of rate-aware load balancing in heterogeneous many-server systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured simulation replications and write results.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// key=value overrides on dotted config paths, repeatable.
        #[arg(long = "override")]
        overrides: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve the chain exactly and write results plus identity checks.
    Exact {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override")]
        overrides: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the sweep grid, fit scaling exponents, optionally plot.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override")]
        overrides: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Emit a log-log SVG chart of the selected metric.
        #[arg(long)]
        plot: bool,
        /// Metric to fit and plot (p_wait, p_block, mean_wait, mean_qbar, h1..h3).
        #[arg(long, default_value = "p_wait")]
        metric: String,
    },
    /// Check a drift lemma over its premise region and write the report.
    DriftCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override")]
        overrides: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Lemma id: most_n1[:delta], most_n2, ssc_sub, ssc_super.
        #[arg(long)]
        lemma: String,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("HETSIM_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { config, overrides, out } => {
            ConfigFile::load(config, overrides).and_then(|cfg| cmd_simulate(&cfg, out))
        }
        Command::Exact { config, overrides, out } => {
            ConfigFile::load(config, overrides).and_then(|cfg| cmd_exact(&cfg, out))
        }
        Command::Sweep { config, overrides, out, plot, metric } => {
            metric.parse::<MetricId>().and_then(|m| {
                ConfigFile::load(config, overrides).and_then(|cfg| cmd_sweep(&cfg, out, *plot, m))
            })
        }
        Command::DriftCheck { config, overrides, out, lemma } => {
            ConfigFile::load(config, overrides).and_then(|cfg| cmd_drift_check(&cfg, lemma, out))
        }
    };
    match outcome {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hetsim: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
