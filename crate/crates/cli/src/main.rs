//! `painaffect`: synthesize cohorts, convert exports, run experiment grids and
//! tabulate reports.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage or
//! configuration errors.

mod config;
mod convert;
mod grid;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Marks an error as a usage/configuration problem (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "painaffect", version, about = "Affect-aware pain-level recognition experiments")]
struct Cli {
    /// Worker threads (defaults to PAINAFFECT_THREADS, then all cores).
    #[arg(long, global = true, env = "PAINAFFECT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort in the corpus format.
    Synth(SynthArgs),
    /// Convert a bioVid-shaped export into the corpus format.
    Convert(convert::ConvertArgs),
    /// Run one experiment plan or a grid of plans.
    Run(grid::RunArgs),
    /// Tabulate report files into plot-ready CSV.
    Report(report::ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Generator config (flat key = value file); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override master_seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut file = match &args.config {
        Some(path) => config::SynthFile::load(path)?,
        None => config::SynthFile::default(),
    };
    if let Some(seed) = args.seed {
        file.master_seed = Some(seed);
    }
    let cfg = file.resolve().map_err(|e| usage(format!("invalid generator config: {e}")))?;
    cfg.validate().map_err(|e| usage(format!("invalid generator config: {e}")))?;
    let corpus = painaffect_core::synthgen::generate_cohort(&cfg)?;
    painaffect_core::dataset::store_corpus(&corpus, &args.out)?;
    println!(
        "{} subjects, {} windows written to {}",
        corpus.subjects.len(),
        corpus.windows.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Convert(a) => convert::run(a),
        Command::Run(a) => grid::run(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
