//! `feta-eval`: batch evaluation of segmentation and biometry submissions.

mod analysis;
mod biometry;
mod evaluate;
mod manifest;
mod paths;
mod phantom;
mod rank;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use feta_eval::LabelSchema;

#[derive(Parser, Debug)]
#[command(name = "feta-eval", version, about = "Fetal brain MRI segmentation and biometry evaluation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Seed for every randomised step.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Label schema JSON; defaults to the standard 8-code layout.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

impl Global {
    pub fn load_schema(&self) -> Result<LabelSchema> {
        let schema = match &self.schema {
            None => LabelSchema::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading schema {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing schema {}", p.display()))?
            }
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.workers).build()?)
    }

    pub fn out_dir(&self) -> Result<&std::path::Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute per-case, per-label segmentation metrics for every team.
    Evaluate(evaluate::EvaluateArgs),
    /// Build a leaderboard from metric tables or biometry MAPE scores.
    Rank(rank::RankArgs),
    /// Score biometry submissions against reference measurements.
    Biometry(biometry::BiometryArgs),
    /// Fit the gestational-age regression baseline and predict test cases.
    BaselineGa(biometry::BaselineArgs),
    /// Run a statistical test on two columns of a CSV file.
    Stats(analysis::StatsArgs),
    /// Conditional-mean profiles and Shapley attributions of image factors.
    DomainShift(analysis::DomainShiftArgs),
    /// Write a synthetic label volume.
    Phantom(phantom::PhantomArgs),
}

/// Result of a command that ran to completion.
pub enum Outcome {
    Clean,
    Partial,
}

fn run(cli: Cli) -> Result<Outcome> {
    let g = &cli.global;
    match cli.command {
        Command::Evaluate(a) => evaluate::run(g, a),
        Command::Rank(a) => rank::run(g, a),
        Command::Biometry(a) => biometry::run(g, a),
        Command::BaselineGa(a) => biometry::run_baseline(g, a),
        Command::Stats(a) => analysis::run_stats(g, a),
        Command::DomainShift(a) => analysis::run_domain_shift(g, a),
        Command::Phantom(a) => phantom::run(g, a),
    }
}

fn main() -> ExitCode {
    // usage errors exit 1; clap's own default of 2 means partial success here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
