use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mho_core::config::load_config;
use mho_core::invariants::run_all;
use mho_core::report::{write_experiment, write_run};
use mho_core::scenario::{run_experiment, run_single};

/// Moving-horizon observer benchmark with adaptive measurement inclusion rate.
#[derive(Parser)]
#[command(name = "mho", version)]
struct Cli {
    /// Flat key = value config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Overrides master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Config override, repeatable: --set N_s=5
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Every setting against every scenario; writes run CSVs, summary.json, indicators.csv.
    RunExperiment,
    /// One (setting, scenario) pair; writes its run CSV.
    RunSingle {
        /// 1-based setting id.
        #[arg(long)]
        setting: usize,
        /// 0-based scenario id.
        #[arg(long)]
        scenario: usize,
    },
    /// Runs the built-in property suites.
    CheckInvariants,
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("master_seed={seed}"));
    }
    let config = load_config(cli.config.as_deref(), &overrides)?;

    match cli.command {
        Command::RunExperiment => {
            let result = run_experiment(&config, cli.workers)?;
            let files = write_experiment(&cli.out, &result)?;
            for i in &result.indicators {
                println!("setting {}: m = {:.6}, sigma = {:.6}", i.setting_id, i.m, i.sigma);
            }
            println!("wrote {} files to {}", files.len(), cli.out.display());
            Ok(true)
        }
        Command::RunSingle { setting, scenario } => {
            let run = run_single(&config, setting, scenario)?;
            let path = write_run(&cli.out, &run)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::CheckInvariants => {
            let outcomes = run_all(config.master_seed);
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("mho: {e}");
            ExitCode::from(2)
        }
    }
}
