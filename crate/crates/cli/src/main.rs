use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sdn_cache::experiment::{self, ExperimentOutcome, ExperimentSpec, RunOptions};

/// Content-centric SDN caching experiments.
#[derive(Parser)]
#[command(name = "sdn-cache", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (sweep value, scheme, seed) combination of a spec.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Check a spec and print diagnostics as JSON, one object per problem.
    Validate { spec: PathBuf },
    /// Run a small built-in sweep.
    Demo {
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(clap::Args)]
struct Opts {
    /// Replace the spec's seeds, e.g. `--seed-override 1,2,3`.
    #[arg(long, value_delimiter = ',')]
    seed_override: Option<Vec<u64>>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory, overriding the spec's `output_path`.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Opts {
    fn into_options(self) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            output_override: self.output,
            seed_override: self.seed_override,
        }
    }
}

fn report(outcome: &ExperimentOutcome) -> ExitCode {
    for f in &outcome.failures {
        eprintln!(
            "run failed: sweep value {}, scheme {}, seed {}: {}",
            f.sweep_value, f.scheme, f.seed, f.error
        );
    }
    println!(
        "{} runs written to {}",
        outcome.runs.len(),
        outcome.output_dir.display()
    );
    for s in &outcome.summary {
        println!(
            "{:>8} {:<14} avg_hops {:.4} +- {:.4}  hit_ratio {:.4}",
            s.sweep_value, s.scheme, s.avg_hops_mean, s.avg_hops_std, s.hit_ratio_mean
        );
    }
    if outcome.succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { spec, opts } => {
            let spec = ExperimentSpec::load(&spec)?;
            let outcome = experiment::run_experiment(&spec, &opts.into_options())
                .context("experiment failed")?;
            Ok(report(&outcome))
        }
        Command::Validate { spec } => {
            let diags = experiment::validate_file(&spec);
            for d in &diags {
                println!("{}", serde_json::to_string(d)?);
            }
            if diags.is_empty() {
                eprintln!("{}: ok", spec.display());
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Demo { opts } => {
            let spec = ExperimentSpec::demo();
            let outcome =
                experiment::run_experiment(&spec, &opts.into_options()).context("demo failed")?;
            Ok(report(&outcome))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
