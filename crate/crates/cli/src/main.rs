//! Command-line driver: simulate scenes, reconstruct them with each
//! method, run the consistency analysis, and print the 3x3 bichromatic
//! demonstration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.

use clap::{Parser, Subcommand};
use polytomo::config::RunConfig;
use polytomo::pipeline::{
    run_analyze, run_method_from_files, run_pipeline, run_simulate, run_starvation,
    PipelineOptions,
};
use polytomo::toy::{build_toy, toy_report};
use polytomo::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "polytomo", version, about = "2D CT simulation and reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Force reproducible outputs (runtimes omitted from reports)
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Project the configured scene and write sinogram plus ground truth
    Simulate(RunArgs),
    /// Filtered backprojection of a previously simulated sinogram
    Fbp(RunArgs),
    /// Metal beam-hardening-corrected reconstruction
    Mbhc(RunArgs),
    /// Train the coordinate network on a previously simulated sinogram
    InrTrain(RunArgs),
    /// Sinogram consistency analysis: moments, range split, artifact image
    Analyze(RunArgs),
    /// Print the 3x3 bichromatic demonstration system and its
    /// least-squares reconstruction
    Toy {
        /// Optional directory for the CSV report
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, reconstruct with every configured method, and report
    /// background errors
    Pipeline(RunArgs),
    /// Photon-starvation comparison: full-ray vs metal-avoiding training
    Starvation(RunArgs),
}

fn options(args: &RunArgs) -> PipelineOptions {
    PipelineOptions {
        out_dir: args.out.clone(),
        seed: args.seed,
        deterministic: args.deterministic,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = RunConfig::from_path(&args.config)?;
            run_simulate(&cfg, &options(&args))
        }
        Command::Fbp(args) => {
            let cfg = RunConfig::from_path(&args.config)?;
            run_method_from_files(&cfg, &options(&args), "fbp")
        }
        Command::Mbhc(args) => {
            let cfg = RunConfig::from_path(&args.config)?;
            run_method_from_files(&cfg, &options(&args), "mbhc")
        }
        Command::InrTrain(args) => {
            let cfg = RunConfig::from_path(&args.config)?;
            run_method_from_files(&cfg, &options(&args), "inr")
        }
        Command::Analyze(args) => {
            let cfg = RunConfig::from_path(&args.config)?;
            run_analyze(&cfg, &options(&args))
        }
        Command::Toy { out } => {
            let report = toy_report(&build_toy());
            print!("{}", report.to_text());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("toy.csv"), report.to_csv())?;
                std::fs::write(dir.join("toy.txt"), report.to_text())?;
            }
            Ok(())
        }
        Command::Pipeline(args) => {
            let cfg = RunConfig::from_path(&args.config)?;
            let report = run_pipeline(&cfg, &options(&args))?;
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::Starvation(args) => {
            let cfg = RunConfig::from_path(&args.config)?;
            let report = run_starvation(&cfg, &options(&args))?;
            println!("full_nonmetal_mae,{}", report.full_mae);
            println!("starved_nonmetal_mae,{}", report.starved_mae);
            if let Some(t) = report.max_error_tooth {
                println!("max_error_tooth,{t}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
