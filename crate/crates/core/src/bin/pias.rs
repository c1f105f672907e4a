use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pias::harness::{self, GridConfig};
use pias::Error;

#[derive(Parser)]
#[command(name = "pias", version, about = "Budget-aware per-instance algorithm selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Grid configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the maximum budget factor
    #[arg(long)]
    max_budget_factor: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<GridConfig, Error> {
        let mut cfg = GridConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        if let Some(m) = self.max_budget_factor {
            cfg.max_budget_factor = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run all optimizers and compute feature samples
    RunSuite(ConfigArgs),
    /// Build size-k portfolio manifests
    BuildPortfolio(ConfigArgs),
    /// Evaluate every selection scenario
    Select(ConfigArgs),
    /// Write figure data from scenario results
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::RunSuite(a) => {
            for (suite, d, s) in harness::cmd_run_suite(&a.load()?)? {
                println!("{suite} d={d}: {} generated, {} up to date", s.generated.len(), s.reused.len());
            }
        }
        Command::BuildPortfolio(a) => {
            let written = harness::cmd_build_portfolio(&a.load()?)?;
            println!("wrote {} portfolio manifests", written.len());
        }
        Command::Select(a) => {
            let s = harness::cmd_select(&a.load()?)?;
            println!("{}", s.count_formula);
            println!("{} scenarios, {} failed, {} with undefined gap", s.scenarios, s.failed, s.undefined_gap);
        }
        Command::Report { results, out } => {
            for p in harness::cmd_report(&results, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::MissingDependency(_) => 3,
                _ => 1,
            })
        }
    }
}
