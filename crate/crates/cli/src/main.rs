use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lndm_cli::commands;
use lndm_cli::config::Config;
use lndm_cli::CliError;

/// Logistic-normal Dirichlet models for compositional data.
#[derive(Debug, Parser)]
#[command(name = "lndm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LNDM_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset from the [simulate] section.
    Simulate(Common),
    /// Fit one structure and write its report.
    Fit(Common),
    /// Fit, then predict the rows of the [predict] file.
    Predict(Common),
    /// Fit every structure of [select] and rank them by DIC.
    Select(Common),
    /// K-fold cross-validation.
    Cv(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::User(format!("cannot set thread count: {e}")))?;
    }
    let (Command::Simulate(c) | Command::Fit(c) | Command::Predict(c) | Command::Select(c) | Command::Cv(c)) =
        &cli.command;
    let mut cfg = Config::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    match cli.command {
        Command::Simulate(_) => {
            let path = commands::run_simulate(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Fit(_) => {
            let rep = commands::run_fit(&cfg)?;
            println!(
                "structure {}: DIC {:.2}, WAIC {:.2}, LCPO {:.4}; report in {}",
                rep.structure,
                rep.metrics.dic,
                rep.metrics.waic,
                rep.metrics.lcpo,
                cfg.output.dir.display()
            );
        }
        Command::Predict(_) => {
            let path = commands::run_predict(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Select(_) => {
            let t = commands::run_select(&cfg)?;
            println!("{:<10} {:>12} {:>12} {:>10}", "structure", "DIC", "WAIC", "LCPO");
            for r in &t.rows {
                println!(
                    "{:<10} {:>12.2} {:>12.2} {:>10.4}",
                    r.structure, r.metrics.dic, r.metrics.waic, r.metrics.lcpo
                );
            }
            for (s, e) in &t.failures {
                println!("{s:<10} failed: {e}");
            }
        }
        Command::Cv(_) => {
            let r = commands::run_cv(&cfg)?;
            println!(
                "structure {}: mean log predictive {:.4}, alr RMSE {:.4}",
                r.structure, r.mean_log_predictive, r.alr_rmse
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
