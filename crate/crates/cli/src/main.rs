use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use iclslope_cli::commands;
use iclslope_cli::config::{process_env, RunConfig};
use iclslope_cli::{Cli, Command};

fn run(cli: Cli) -> Result<bool> {
    let config = RunConfig::resolve(&cli.common, process_env)?;
    match cli.command {
        Command::Evaluate { dataset, pool } => {
            let report = commands::run_evaluate(&config, &dataset, &pool)?;
            println!(
                "LCS {:.4} ({:?}) over {} points, pearson {:.4}",
                report.slope, report.classification, report.n_points, report.pearson
            );
        }
        Command::Select { dataset, pool } => {
            let path = commands::run_select(&config, &dataset, &pool)?;
            println!("wrote {}", path.display());
        }
        Command::Synthesize { dataset, prompt, fit } => {
            if let Some(report) = commands::run_synthesize(&config, &dataset, prompt.as_deref(), fit)? {
                println!(
                    "label-free LCS {:.4} ({:?}) over {} points",
                    report.slope, report.classification, report.n_points
                );
            }
            println!("wrote {}", config.out_dir.join(commands::SYNTHETIC_POOL_FILE).display());
        }
        Command::Paraphrase { dataset, prompt } => {
            let path = commands::run_paraphrase(&config, &dataset, prompt.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::OracleVerify { worlds } => {
            let run = commands::run_oracle_verify(&config, worlds)?;
            for line in commands::oracle_summary(&run) {
                println!("{line}");
            }
            println!("{} worlds in {:.2}s", worlds, run.elapsed_secs);
            return Ok(run.suite.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
