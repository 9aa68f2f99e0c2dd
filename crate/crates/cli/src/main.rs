use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use real_cli::{
    parse_config, parse_fractions, parse_n_values, thread_pool, ConfigError, HarnessError,
};
use real_core::StrategyKind;

#[derive(Parser)]
#[command(
    name = "real",
    version,
    about = "Reinforced active learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Every configured strategy and the agent over all seeds.
    Run { config: PathBuf },
    /// Agent accuracy and training time for each labels-per-step value.
    SweepN {
        config: PathBuf,
        /// `1..10` or a comma list.
        #[arg(long, default_value = "1..10")]
        n: String,
    },
    /// Every policy at each fraction of noisy training rows.
    SweepNoise {
        config: PathBuf,
        #[arg(long, default_value = "0,0.1,0.5,1.0")]
        fractions: String,
    },
    /// A single fixed strategy, agent disabled.
    Baseline {
        config: PathBuf,
        #[arg(long)]
        strategy: String,
    },
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    let pool = thread_pool()?;
    match cmd {
        Command::Run { config } => {
            let cfg = parse_config(config)?;
            pool.install(|| real_cli::run_experiment(&cfg))?;
            eprintln!("wrote {}", cfg.output_dir.join("curves.csv").display());
        }
        Command::SweepN { config, n } => {
            let ns = parse_n_values(&n)?;
            let cfg = parse_config(config)?;
            pool.install(|| real_cli::sweep_n(&cfg, &ns))?;
            eprintln!("wrote {}", cfg.output_dir.join("n_sweep.csv").display());
        }
        Command::SweepNoise { config, fractions } => {
            let fr = parse_fractions(&fractions)?;
            let cfg = parse_config(config)?;
            pool.install(|| real_cli::sweep_noise(&cfg, &fr))?;
            eprintln!("wrote {}", cfg.output_dir.join("noise_sweep.csv").display());
        }
        Command::Baseline { config, strategy } => {
            let kind: StrategyKind = strategy
                .parse()
                .map_err(|_| ConfigError::new(format!("unknown strategy `{strategy}`")))?;
            let mut cfg = parse_config(config)?;
            cfg.strategies = vec![kind];
            cfg.agent_enabled = false;
            pool.install(|| real_cli::run_experiment(&cfg))?;
            eprintln!("wrote {}", cfg.output_dir.join("curves.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
